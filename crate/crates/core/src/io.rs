//! File formats and synthetic data: JSON model files, CSV point files and
//! loss histories, and the two dataset generators used by the command line.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm_nd::GmmN;

/// Tolerance on the weight sum when a model file is loaded.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dim: usize,
    pub components: Vec<ComponentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_gmm(g: &GmmN) -> Self {
        let d = g.dim();
        let components = (0..g.len())
            .map(|j| ComponentEntry {
                weight: g.weights()[j],
                mean: g.means()[j].iter().copied().collect(),
                scale: (0..d)
                    .map(|r| (0..d).map(|c| g.scales()[j][(r, c)]).collect())
                    .collect(),
            })
            .collect();
        Self { dim: d, components }
    }

    pub fn to_gmm(&self) -> Result<GmmN> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::MalformedModel("dim must be at least 1".into()));
        }
        if self.components.is_empty() {
            return Err(Error::MalformedModel("no components".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::MalformedModel(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let mut weights = Vec::with_capacity(self.components.len());
        let mut means = Vec::with_capacity(self.components.len());
        let mut scales = Vec::with_capacity(self.components.len());
        for (j, c) in self.components.iter().enumerate() {
            if c.mean.len() != d {
                return Err(Error::MalformedModel(format!(
                    "component {j}: mean has length {}, expected {d}",
                    c.mean.len()
                )));
            }
            if c.scale.len() != d || c.scale.iter().any(|row| row.len() != d) {
                return Err(Error::MalformedModel(format!(
                    "component {j}: scale must be a {d}x{d} matrix"
                )));
            }
            weights.push(c.weight);
            means.push(DVector::from_column_slice(&c.mean));
            scales.push(DMatrix::from_fn(d, d, |r, col| c.scale[r][col]));
        }
        GmmN::new(weights, means, scales).map_err(|e| Error::MalformedModel(e.to_string()))
    }

    /// Pretty JSON with a trailing newline. Floats use the shortest decimal
    /// form that parses back to the same value, so a save/load/save cycle is
    /// byte-identical.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))
    }
}

pub fn save_model(path: &Path, g: &GmmN) -> Result<()> {
    fs::write(path, ModelFile::from_gmm(g).to_json())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GmmN> {
    ModelFile::from_json(&fs::read_to_string(path)?)?.to_gmm()
}

/// Parses comma-separated points. Every row must have the same number of
/// columns; `header` skips the first line.
pub fn parse_points(text: &str, header: bool) -> Result<Vec<DVector<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1 + usize::from(header);
        let record = record.map_err(|e| Error::MalformedPoints {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::MalformedPoints {
                row,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} columns, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedPoints {
                row,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedPoints {
                    row,
                    column: c + 1,
                    message: format!("not finite: {field:?}"),
                });
            }
            values.push(v);
        }
        points.push(DVector::from_vec(values));
    }
    if points.is_empty() {
        return Err(Error::Empty("points"));
    }
    Ok(points)
}

pub fn read_points(path: &Path, header: bool) -> Result<Vec<DVector<f64>>> {
    parse_points(&fs::read_to_string(path)?, header)
}

pub fn points_to_csv(points: &[DVector<f64>]) -> String {
    let mut out = String::new();
    for p in points {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_points(path: &Path, points: &[DVector<f64>]) -> Result<()> {
    fs::write(path, points_to_csv(points))?;
    Ok(())
}

/// `step,loss` CSV, steps counted from 0.
pub fn history_to_csv(history: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    fs::write(path, history_to_csv(history))?;
    Ok(())
}

/// Standard deviation of the isotropic jitter added to generated shapes.
pub const SHAPE_JITTER: f64 = 0.01;

/// Planar test shape: the outline of a 2x2 square centred at (-2, 0), a unit
/// circle centred at (2, 0), and the segment joining them along the x axis.
/// Points are split 40/40/20 between the three parts, placed uniformly along
/// each, and jittered.
pub fn gen_paper2d(n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rect = 2 * n / 5;
    let n_circ = 2 * n / 5;
    let n_line = n - n_rect - n_circ;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n_rect {
        let s: f64 = rng.random_range(0.0..8.0);
        let (x, y) = match s {
            s if s < 2.0 => (-3.0 + s, -1.0),
            s if s < 4.0 => (-1.0, -1.0 + (s - 2.0)),
            s if s < 6.0 => (-1.0 - (s - 4.0), 1.0),
            s => (-3.0, 1.0 - (s - 6.0)),
        };
        pts.push((x, y));
    }
    for _ in 0..n_circ {
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        pts.push((2.0 + a.cos(), a.sin()));
    }
    for _ in 0..n_line {
        pts.push((rng.random_range(-1.0..1.0), 0.0));
    }
    Ok(pts
        .into_iter()
        .map(|(x, y)| {
            let jx: f64 = rng.sample(StandardNormal);
            let jy: f64 = rng.sample(StandardNormal);
            DVector::from_vec(vec![x + SHAPE_JITTER * jx, y + SHAPE_JITTER * jy])
        })
        .collect())
}

/// A random reference mixture and `n` samples from it. Means are uniform in
/// `[-4, 4]^dim`; scales are upper triangular with diagonal in `[0.3, 1]` and
/// off-diagonal entries in `[-0.3, 0.3]`; weights are normalised uniforms.
pub fn gen_gaussians(
    n: usize,
    dim: usize,
    components: usize,
    seed: u64,
) -> Result<(GmmN, Vec<DVector<f64>>)> {
    if n == 0 || dim == 0 || components == 0 {
        return Err(Error::InvalidConfig(
            "n, dim and components must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..components).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..components)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-4.0..4.0)))
        .collect();
    let scales = (0..components)
        .map(|_| {
            DMatrix::from_fn(dim, dim, |r, c| match r.cmp(&c) {
                std::cmp::Ordering::Equal => rng.random_range(0.3..1.0),
                std::cmp::Ordering::Less => rng.random_range(-0.3..0.3),
                std::cmp::Ordering::Greater => 0.0,
            })
        })
        .collect();
    let model = GmmN::new(weights, means, scales)?;
    let points = model.sample_n(&mut rng, n);
    Ok((model, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip_is_byte_identical() {
        let (g, _) = gen_gaussians(5, 3, 4, 9).unwrap();
        let text = ModelFile::from_gmm(&g).to_json();
        let back = ModelFile::from_json(&text).unwrap().to_gmm().unwrap();
        assert_eq!(back, g);
        assert_eq!(ModelFile::from_gmm(&back).to_json(), text);
    }

    #[test]
    fn model_validation() {
        let bad_sum = r#"{"dim":1,"components":[{"weight":0.5,"mean":[0],"scale":[[1]]}]}"#;
        assert!(ModelFile::from_json(bad_sum).unwrap().to_gmm().is_err());
        let bad_shape = r#"{"dim":2,"components":[{"weight":1,"mean":[0,0],"scale":[[1,0]]}]}"#;
        assert!(ModelFile::from_json(bad_shape).unwrap().to_gmm().is_err());
        let ok = r#"{"dim":1,"components":[{"weight":1,"mean":[2],"scale":[[0.5]]}]}"#;
        let g = ModelFile::from_json(ok).unwrap().to_gmm().unwrap();
        assert_eq!(g.dim(), 1);
        assert!(ModelFile::from_json("{").is_err());
    }

    #[test]
    fn points_parse_and_report_position() {
        let pts = parse_points("1,2\n3, 4\n", false).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1][1], 4.0);
        let pts = parse_points("x,y\n1,2\n", true).unwrap();
        assert_eq!(pts.len(), 1);
        match parse_points("1,2\n3,abc\n", false) {
            Err(Error::MalformedPoints { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        match parse_points("1,2\n3\n", false) {
            Err(Error::MalformedPoints { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_points("", false).is_err());
    }

    #[test]
    fn points_csv_round_trip() {
        let pts = gen_paper2d(50, 3).unwrap();
        assert_eq!(parse_points(&points_to_csv(&pts), false).unwrap(), pts);
    }

    #[test]
    fn paper2d_shape() {
        let pts = gen_paper2d(850, 1).unwrap();
        assert_eq!(pts.len(), 850);
        assert!(pts.iter().all(|p| p.len() == 2));
        assert_eq!(gen_paper2d(1, 1).unwrap().len(), 1);
        assert_eq!(gen_paper2d(850, 1).unwrap(), pts);
        assert_ne!(gen_paper2d(850, 2).unwrap(), pts);
        assert!(gen_paper2d(0, 1).is_err());
    }

    #[test]
    fn history_format() {
        assert_eq!(history_to_csv(&[0.5, 0.25]), "step,loss\n0,0.5\n1,0.25\n");
    }
}
