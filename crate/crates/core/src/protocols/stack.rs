//! Layered protocol stacks loaded onto nodes.

use std::collections::{BTreeMap, BTreeSet};

use super::ProtocolError;

pub const QKD_APP: &str = "QKDApp";
pub const QKD_RMP: &str = "QKDRMP";
pub const QKD_ROUTING: &str = "QKDRouting";
pub const KEY_GENERATION: &str = "KeyGeneration";

/// Protocols of one node and their upper/lower relations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolStack {
    owner: String,
    protocols: BTreeSet<String>,
    /// upper → lowers
    lower: BTreeMap<String, BTreeSet<String>>,
}

impl ProtocolStack {
    /// Builds a stack from `(upper, lower)` relations. The hierarchy must be
    /// acyclic and connected.
    pub fn build(owner: &str, relations: &[(&str, &str)]) -> Result<Self, ProtocolError> {
        let mut stack = ProtocolStack {
            owner: owner.to_string(),
            protocols: BTreeSet::new(),
            lower: BTreeMap::new(),
        };
        for &(up, down) in relations {
            if up == down {
                return Err(ProtocolError::Stack(format!("`{up}` cannot sit on itself")));
            }
            stack.protocols.insert(up.to_string());
            stack.protocols.insert(down.to_string());
            stack.lower.entry(up.to_string()).or_default().insert(down.to_string());
        }
        stack.check()?;
        Ok(stack)
    }

    /// Single-protocol stack.
    pub fn single(owner: &str, protocol: &str) -> Self {
        ProtocolStack {
            owner: owner.to_string(),
            protocols: BTreeSet::from([protocol.to_string()]),
            lower: BTreeMap::new(),
        }
    }

    /// QKDApp over QKDRMP over QKDRouting over KeyGeneration.
    pub fn endnode(owner: &str) -> Self {
        Self::build(owner, &[(QKD_APP, QKD_RMP), (QKD_RMP, QKD_ROUTING), (QKD_ROUTING, KEY_GENERATION)])
            .expect("endnode stack is well formed")
    }

    /// The endnode stack without the application layer.
    pub fn repeater(owner: &str) -> Self {
        Self::build(owner, &[(QKD_RMP, QKD_ROUTING), (QKD_ROUTING, KEY_GENERATION)]).expect("repeater stack is well formed")
    }

    fn check(&self) -> Result<(), ProtocolError> {
        // Acyclic: repeatedly strip protocols with no remaining lowers.
        let mut remaining: BTreeMap<&str, BTreeSet<&str>> = self
            .protocols
            .iter()
            .map(|p| {
                let l = self.lower.get(p).map(|s| s.iter().map(String::as_str).collect()).unwrap_or_default();
                (p.as_str(), l)
            })
            .collect();
        while !remaining.is_empty() {
            let leaves: Vec<&str> = remaining.iter().filter(|(_, l)| l.is_empty()).map(|(p, _)| *p).collect();
            if leaves.is_empty() {
                return Err(ProtocolError::Stack(format!("cycle in the stack of `{}`", self.owner)));
            }
            for leaf in leaves {
                remaining.remove(leaf);
                for l in remaining.values_mut() {
                    l.remove(leaf);
                }
            }
        }
        // Connected, ignoring direction.
        let Some(first) = self.protocols.iter().next() else {
            return Err(ProtocolError::Stack("empty stack".into()));
        };
        let mut seen = BTreeSet::from([first.as_str()]);
        let mut frontier = vec![first.as_str()];
        while let Some(p) = frontier.pop() {
            for q in self.protocols.iter().map(String::as_str) {
                if !seen.contains(q) && self.adjacent(p, q) {
                    seen.insert(q);
                    frontier.push(q);
                }
            }
        }
        if seen.len() != self.protocols.len() {
            return Err(ProtocolError::Stack(format!("stack of `{}` is not connected", self.owner)));
        }
        Ok(())
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn protocols(&self) -> impl Iterator<Item = &str> {
        self.protocols.iter().map(String::as_str)
    }

    pub fn contains(&self, protocol: &str) -> bool {
        self.protocols.contains(protocol)
    }

    pub fn lowers(&self, protocol: &str) -> Vec<&str> {
        self.lower
            .get(protocol)
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn uppers(&self, protocol: &str) -> Vec<&str> {
        self.lower
            .iter()
            .filter(|(_, l)| l.contains(protocol))
            .map(|(u, _)| u.as_str())
            .collect()
    }

    /// True when `a` and `b` are directly stacked on each other.
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        let down = |x: &str, y: &str| self.lower.get(x).is_some_and(|l| l.contains(y));
        down(a, b) || down(b, a)
    }

    /// Whether a message from `from` to `to` inside this stack is legal.
    pub fn check_message(&self, from: &str, to: &str) -> Result<(), ProtocolError> {
        if self.adjacent(from, to) {
            Ok(())
        } else {
            Err(ProtocolError::Stack(format!(
                "`{from}` and `{to}` are not adjacent in the stack of `{}`",
                self.owner
            )))
        }
    }

    /// Protocols from the top down (uppers before lowers, ties by name).
    pub fn top_down(&self) -> Vec<&str> {
        let mut order = Vec::new();
        let mut placed = BTreeSet::new();
        while order.len() < self.protocols.len() {
            for p in self.protocols.iter().map(String::as_str) {
                if !placed.contains(p) && self.uppers(p).iter().all(|u| placed.contains(u)) {
                    placed.insert(p);
                    order.push(p);
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endnode_and_repeater_layers() {
        let e = ProtocolStack::endnode("A");
        assert_eq!(e.top_down(), [QKD_APP, QKD_RMP, QKD_ROUTING, KEY_GENERATION]);
        let r = ProtocolStack::repeater("R");
        assert!(!r.contains(QKD_APP));
        assert_eq!(r.top_down(), [QKD_RMP, QKD_ROUTING, KEY_GENERATION]);
        assert!(e.check_message(QKD_APP, QKD_RMP).is_ok());
        assert!(e.check_message(QKD_APP, KEY_GENERATION).is_err());
    }

    #[test]
    fn rejects_cycles_and_disconnected() {
        assert!(ProtocolStack::build("A", &[("a", "b"), ("b", "a")]).is_err());
        assert!(ProtocolStack::build("A", &[("a", "b"), ("c", "d")]).is_err());
        assert!(ProtocolStack::build("A", &[]).is_err());
        let dag = ProtocolStack::build("A", &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]).unwrap();
        assert_eq!(dag.top_down(), ["a", "b", "c", "d"]);
    }
}
