//! Decoy-state key generation from a satellite during one pass over a
//! ground station, binned over time.

use serde::{Deserialize, Serialize};

use super::bb84::{run_bb84, Bb84Params, Bb84Result, IntensityClass};
use super::ProtocolError;
use crate::des::SimTime;
use crate::net::{Channel, ChannelKind, Device, LossTable, Mobility, Network, Node, PhotonSource, PolarizationDetector};

pub const SATELLITE: &str = "Satellite";
pub const GROUND: &str = "Ground";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SatelliteParams {
    pub frequency: f64,
    pub window_s: f64,
    pub bins: usize,
    pub min_km: f64,
    pub max_km: f64,
    pub efficiency: f64,
    pub dark_count_rate: f64,
    pub classes: Vec<IntensityClass>,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        SatelliteParams {
            frequency: 2e4,
            window_s: 300.0,
            bins: 30,
            min_km: 500.0,
            max_km: 1200.0,
            efficiency: 0.5,
            dark_count_rate: 0.0,
            classes: vec![
                IntensityClass::new("signal", 0.8, 0.5),
                IntensityClass::new("decoy", 0.1, 0.25),
                IntensityClass::new("vacuum", 0.0, 0.25),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassBin {
    pub start_s: f64,
    pub end_s: f64,
    pub distance_km: f64,
    pub loss_db: f64,
    pub sifted: u64,
}

#[derive(Debug, Clone)]
pub struct SatelliteResult {
    pub bins: Vec<PassBin>,
    pub run: Bb84Result,
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

impl SatelliteResult {
    /// Correlation of the per-bin sifted counts with the distance at the
    /// bin centres.
    pub fn distance_correlation(&self) -> f64 {
        let d: Vec<f64> = self.bins.iter().map(|b| b.distance_km).collect();
        let k: Vec<f64> = self.bins.iter().map(|b| b.sifted as f64).collect();
        pearson(&d, &k)
    }

    /// `sum (a - b)^2 / (a + b)` over bins mirrored about the centre of the
    /// pass, with the number of non-empty pairs as degrees of freedom.
    pub fn mirror_chi2(&self) -> (f64, usize) {
        let n = self.bins.len();
        let mut chi2 = 0.0;
        let mut dof = 0;
        for i in 0..n / 2 {
            let (a, b) = (self.bins[i].sifted as f64, self.bins[n - 1 - i].sifted as f64);
            if a + b > 0.0 {
                chi2 += (a - b).powi(2) / (a + b);
                dof += 1;
            }
        }
        (chi2, dof)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("start_s,end_s,distance_km,loss_db,sifted\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{:.3},{:.3},{}\n", b.start_s, b.end_s, b.distance_km, b.loss_db, b.sifted));
        }
        out
    }
}

/// Satellite with a source and a pass profile, ground station with a
/// detector, joined by a free-space channel and classical links.
pub fn satellite_network(params: &SatelliteParams) -> Result<Network, ProtocolError> {
    let mut sat = Node::new(SATELLITE, "satellite");
    sat.install(Device::PhotonSource {
        name: "source".into(),
        source: PhotonSource::new(params.frequency, 0.8)?,
    })?;
    sat.mobility = Some(Mobility::new(
        SimTime::ZERO,
        SimTime::from_secs_f64(params.window_s),
        params.min_km,
        params.max_km,
        LossTable::free_space_default(),
    )?);
    let mut ground = Node::new(GROUND, "endnode");
    ground.install(Device::PolarizationDetector {
        name: "detector".into(),
        detector: PolarizationDetector::new(params.efficiency, params.dark_count_rate)?,
    })?;
    let mut net = Network::new();
    net.add_node(sat)?;
    net.add_node(ground)?;
    net.add_link(
        SATELLITE,
        GROUND,
        vec![
            Channel::new(ChannelKind::FreeSpace, SATELLITE, GROUND, params.max_km)?,
            Channel::new(ChannelKind::ClassicalFiber, SATELLITE, GROUND, params.max_km)?,
            Channel::new(ChannelKind::ClassicalFiber, GROUND, SATELLITE, params.max_km)?,
        ],
    )?;
    net.compute_routes();
    Ok(net)
}

/// Runs key generation over the whole pass of `net`'s satellite and bins
/// the sifted bits by emission time.
pub fn satellite_pass_run(net: &Network, params: &SatelliteParams, seed: u64) -> Result<SatelliteResult, ProtocolError> {
    if params.bins == 0 {
        return Err(ProtocolError::Parameter("at least one bin".into()));
    }
    let mobility = net
        .node(SATELLITE)
        .and_then(|n| n.mobility.clone())
        .ok_or_else(|| ProtocolError::Parameter(format!("`{SATELLITE}` has no mobility")))?;
    let source = net.node(SATELLITE).and_then(|n| n.source()).ok_or_else(|| ProtocolError::MissingDevice {
        node: SATELLITE.into(),
        device: "photon source",
    })?;
    let window = (mobility.window_end - mobility.window_start).as_secs_f64();
    let pulses = (window * source.frequency).floor() as u64;
    let bb = Bb84Params {
        pulses,
        start: mobility.window_start,
        classes: params.classes.clone(),
        ..Bb84Params::default()
    };
    let run = run_bb84(net, SATELLITE, GROUND, &bb, seed)?;
    let width = window / params.bins as f64;
    let start = mobility.window_start.as_secs_f64();
    let mut bins: Vec<PassBin> = (0..params.bins)
        .map(|i| {
            let centre = SimTime::from_secs_f64(start + (i as f64 + 0.5) * width);
            let (distance_km, loss_db) = mobility.satellite_pass(centre).expect("centre inside the window");
            PassBin {
                start_s: start + i as f64 * width,
                end_s: start + (i + 1) as f64 * width,
                distance_km,
                loss_db,
                sifted: 0,
            }
        })
        .collect();
    for s in &run.sifted {
        let t = run.pulse_time(s.index).as_secs_f64() - start;
        let i = ((t / width) as usize).min(params.bins - 1);
        bins[i].sifted += 1;
    }
    Ok(SatelliteResult { bins, run })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_extremes() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_pass_counts_more_near_closest_approach() {
        let params = SatelliteParams {
            frequency: 2e4,
            window_s: 30.0,
            bins: 6,
            ..SatelliteParams::default()
        };
        let net = satellite_network(&params).unwrap();
        let r = satellite_pass_run(&net, &params, 1).unwrap();
        assert_eq!(r.bins.len(), 6);
        assert!(r.bins[2].sifted > r.bins[0].sifted);
        assert!(r.distance_correlation() < 0.0);
    }
}
