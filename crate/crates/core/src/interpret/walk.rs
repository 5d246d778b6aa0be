use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::norm;
use crate::nn::DenseNetwork;

/// Network outputs at one point of a walk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkPoint {
    pub epsilon: f64,
    pub penultimate: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Evaluates the model at `x0 + ε · d̂` for each grid ε, where `d̂` is the
/// unit-length direction, so ε is a Euclidean distance from `x0`.
pub fn walk_path(
    model: &DenseNetwork,
    x0: &[f64],
    direction: &[f64],
    grid: &[f64],
) -> Result<Vec<WalkPoint>> {
    if direction.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            op: "walk_path",
            left: (x0.len(), 1),
            right: (direction.len(), 1),
        });
    }
    if grid.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("walk grid"));
    }
    let len = norm(direction);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::out_of_range("direction", "must be non-zero and finite"));
    }
    let unit: Vec<f64> = direction.iter().map(|d| d / len).collect();
    grid.iter()
        .map(|&epsilon| {
            let x: Vec<f64> = x0.iter().zip(&unit).map(|(a, d)| a + epsilon * d).collect();
            let t = model.forward(&x)?;
            Ok(WalkPoint {
                epsilon,
                penultimate: t.penultimate,
                probabilities: t.probabilities,
            })
        })
        .collect()
}

/// `epsilon,o_0..o_{C-1},p_0..p_{C-1}`.
pub fn walk_to_csv(points: &[WalkPoint]) -> String {
    let classes = points.first().map_or(0, |p| p.probabilities.len());
    let mut header = vec!["epsilon".to_string()];
    header.extend((0..classes).map(|c| format!("o_{c}")));
    header.extend((0..classes).map(|c| format!("p_{c}")));
    let mut out = header.join(",");
    out.push('\n');
    for p in points {
        let cells: Vec<String> = std::iter::once(p.epsilon)
            .chain(p.penultimate.iter().copied())
            .chain(p.probabilities.iter().copied())
            .map(|v| v.to_string())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, ModelConfig};

    #[test]
    fn walk_matches_forward_and_csv_shape() {
        let cfg = ModelConfig {
            hidden_width: 6,
            ..ModelConfig::canonical()[3].clone()
        };
        let net = init_network(&cfg, 3, 2).unwrap();
        let x0 = [0.2, 0.4, 0.6];
        // Length 1.5, so ε = 1.5 reaches x0 + dir.
        let dir = [1.0, -1.0, 0.5];
        let pts = walk_path(&net, &x0, &dir, &[0.0, 1.5]).unwrap();
        assert_eq!(pts[0].penultimate, net.forward(&x0).unwrap().penultimate);
        let moved = net.forward(&[1.2, -0.6, 1.1]).unwrap();
        for (a, b) in pts[1].probabilities.iter().zip(&moved.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(walk_path(&net, &x0, &[0.0; 3], &[0.0]).is_err());
        let csv = walk_to_csv(&pts);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epsilon,o_0,o_1,p_0,p_1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
        assert!(walk_path(&net, &x0, &dir[..2], &[0.0]).is_err());
    }
}
