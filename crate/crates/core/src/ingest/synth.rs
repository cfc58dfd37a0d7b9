use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Label, TemporalDataset, TransactionGraph, AF_WIDTH};
use crate::nn::Matrix;
use crate::util::stream;

/// Number of leading non-time columns that carry the planted class shift.
const SHIFTED_COLUMNS: usize = 8;

/// Parameters of a seeded synthetic temporal dataset.
///
/// Column 0 of every feature row holds the time step; the remaining columns
/// are standard normal, with illicit nodes shifted by `shift` on the first
/// few of them. Edges are independent Bernoulli(`edge_density`) draws over
/// node pairs within a step.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_timesteps: usize,
    pub nodes_per_step: usize,
    pub feature_dim: usize,
    pub illicit_fraction: f64,
    pub edge_density: f64,
    pub seed: u64,
    /// Fraction of nodes whose label is hidden as `Unknown`.
    pub unknown_fraction: f64,
    pub shift: f32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_timesteps: 5,
            nodes_per_step: 100,
            feature_dim: AF_WIDTH,
            illicit_fraction: 0.1,
            edge_density: 0.02,
            seed: 0,
            unknown_fraction: 0.0,
            shift: 3.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.num_timesteps == 0 {
            return bad("num_timesteps must be at least 1");
        }
        if self.nodes_per_step == 0 {
            return bad("nodes_per_step must be at least 1");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.illicit_fraction) {
            return bad("illicit_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.unknown_fraction) {
            return bad("unknown_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad("edge_density must lie in [0, 1]");
        }
        if !self.shift.is_finite() {
            return bad("shift must be finite");
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<TemporalDataset> {
    spec.validate()?;
    let n = spec.nodes_per_step;
    let d = spec.feature_dim;
    let mut graphs = Vec::with_capacity(spec.num_timesteps);
    for k in 0..spec.num_timesteps {
        let step = (k + 1) as u32;
        let mut rng = stream(spec.seed, "synth", k as u64);
        let ids: Vec<u64> = (0..n).map(|i| (k * n + i) as u64 + 1).collect();

        let n_illicit = (spec.illicit_fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut truth = vec![Label::Licit; n];
        for &i in &order[..n_illicit] {
            truth[i] = Label::Illicit;
        }

        let mut data = Vec::with_capacity(n * d);
        for &label in &truth {
            data.push(step as f32);
            for c in 1..d {
                let z: f32 = rng.sample(StandardNormal);
                let shifted = label == Label::Illicit && c <= SHIFTED_COLUMNS;
                data.push(if shifted { z + spec.shift } else { z });
            }
        }

        let mut labels = truth.clone();
        for l in labels.iter_mut() {
            if rng.random::<f64>() < spec.unknown_fraction {
                *l = Label::Unknown;
            }
        }

        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < spec.edge_density {
                    edges.push((ids[i], ids[j]));
                }
            }
        }
        let x = Matrix::from_vec(n, d, data)?;
        graphs.push(TransactionGraph::build(step, ids, &edges, x, labels)?);
    }
    TemporalDataset::new(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = SynthSpec { seed: 11, ..SynthSpec::default() };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SynthSpec { seed: 12, ..SynthSpec::default() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn zero_illicit_fraction() {
        let spec = SynthSpec { illicit_fraction: 0.0, ..SynthSpec::default() };
        let ds = generate_synthetic(&spec).unwrap();
        assert!(ds.graphs().iter().all(|g| g.labels().iter().all(|&l| l == Label::Licit)));
    }

    #[test]
    fn no_unknown_unless_requested() {
        let ds = generate_synthetic(&SynthSpec::default()).unwrap();
        assert_eq!(ds.label_counts().unknown, 0);
        let spec = SynthSpec { unknown_fraction: 0.5, ..SynthSpec::default() };
        assert!(generate_synthetic(&spec).unwrap().label_counts().unknown > 0);
    }

    #[test]
    fn edge_count_matches_binomial() {
        // pooled count over 100 seeds ~ Binomial(100·C(n,2), p)
        let (n, p) = (40usize, 0.1f64);
        let pairs = (n * (n - 1) / 2) as f64;
        let mut total = 0usize;
        for seed in 0..100 {
            let spec = SynthSpec {
                num_timesteps: 1,
                nodes_per_step: n,
                feature_dim: 2,
                edge_density: p,
                seed,
                ..SynthSpec::default()
            };
            total += generate_synthetic(&spec).unwrap().num_edges();
        }
        let trials = 100.0 * pairs;
        let mean = trials * p;
        let sigma = (trials * p * (1.0 - p)).sqrt();
        assert!(((total as f64) - mean).abs() <= 3.0 * sigma, "{total} vs {mean} ± {sigma}");
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate_synthetic(&SynthSpec { nodes_per_step: 0, ..SynthSpec::default() }).is_err());
        assert!(generate_synthetic(&SynthSpec { illicit_fraction: 1.5, ..SynthSpec::default() }).is_err());
    }
}
