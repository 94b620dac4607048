//! Hidden-layer comparison between an ideal and a tuned network.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkInstance, NoiseMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub pattern: usize,
    pub neuron: usize,
    /// Hidden amplifier output above its bias (V).
    pub ideal: f64,
    pub achieved: f64,
}

/// Noiseless hidden amplifier outputs of both networks, relative to the
/// amplifier bias. Points whose ideal output is not positive are dropped.
pub fn hidden_output_probe<T: Scalar>(
    ideal: &NetworkInstance<T>,
    achieved: &NetworkInstance<T>,
    patterns: &[Vec<bool>],
) -> Result<Vec<ProbePoint>> {
    if ideal.topology != achieved.topology {
        return Err(Error::Shape("probe networks differ in topology".into()));
    }
    let per: Vec<Vec<ProbePoint>> = patterns
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let a = ideal.forward(p, NoiseMode::Off)?;
            let b = achieved.forward(p, NoiseMode::Off)?;
            let (bi, ba) = (ideal.hidden.v_bias, achieved.hidden.v_bias);
            Ok(a.hidden_amp
                .iter()
                .zip(&b.hidden_amp)
                .enumerate()
                .map(|(neuron, (&x, &y))| ProbePoint {
                    pattern: k,
                    neuron,
                    ideal: (x - bi).f64(),
                    achieved: (y - ba).f64(),
                })
                .filter(|p| p.ideal > 0.0)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn probe_to_csv(points: &[ProbePoint]) -> String {
    let mut s = String::from("pattern,neuron,ideal_V,achieved_V\n");
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.pattern, p.neuron, p.ideal, p.achieved));
    }
    s
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len()) as f64;
    if n < 2.0 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn probe_correlation(points: &[ProbePoint]) -> Option<f64> {
    let x: Vec<f64> = points.iter().map(|p| p.ideal).collect();
    let y: Vec<f64> = points.iter().map(|p| p.achieved).collect();
    pearson(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[1.0; 4]).is_none());
    }
}
