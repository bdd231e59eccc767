//! 100x100 Q-value grid for heatmaps.
//!
//! Rows sweep one state feature over a list of values (quantiles of that
//! feature in some reference sample). Columns unroll `(template, action)`
//! pairs: column `j` maps to unrolled index `floor(j * T * A / cols)` where
//! `T` is the number of templates (one per phase) and `A` the action count.
//! Each cell is `Q(template with feature := row value)[action]`.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::QNetwork;

pub const GRID_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGridSpec {
    pub row_feature: usize,
    pub row_values: Vec<f64>,
    pub templates: Vec<Vec<f64>>,
    pub template_labels: Vec<String>,
    pub cols: usize,
}

impl QGridSpec {
    /// `(template, action)` for column `j`.
    pub fn column(&self, j: usize, n_actions: usize) -> (usize, usize) {
        let k = j * self.templates.len() * n_actions / self.cols;
        (k / n_actions, k % n_actions)
    }

    /// Rows at the mid-quantiles `(i + 0.5) / rows` of `sample`.
    pub fn quantile_rows(sample: &[f64], rows: usize) -> Result<Vec<f64>> {
        let mut s: Vec<f64> = sample.iter().copied().filter(|v| v.is_finite()).collect();
        if s.is_empty() {
            return Err(Error::Validation(
                "no finite values to take quantiles of".into(),
            ));
        }
        s.sort_by(f64::total_cmp);
        Ok((0..rows)
            .map(|i| {
                let q = (i as f64 + 0.5) / rows as f64;
                let idx = ((q * s.len() as f64).floor() as usize).min(s.len() - 1);
                s[idx]
            })
            .collect())
    }
}

pub fn export_qgrid(net: &QNetwork, spec: &QGridSpec) -> Result<Array2<f64>> {
    if spec.templates.is_empty() || spec.cols == 0 {
        return Err(Error::config(
            "Q-grid needs at least one template and one column",
        ));
    }
    let dim = net.spec().input;
    if spec.row_feature >= dim {
        return Err(Error::Shape {
            expected: format!("row feature < {dim}"),
            got: format!("{}", spec.row_feature),
        });
    }
    let n_actions = net.spec().output;
    let mut grid = Array2::zeros((spec.row_values.len(), spec.cols));
    for (i, &v) in spec.row_values.iter().enumerate() {
        let q: Vec<Vec<f64>> = spec
            .templates
            .iter()
            .map(|t| {
                let mut x = t.clone();
                x[spec.row_feature] = v;
                net.predict(&x)
            })
            .collect::<Result<_>>()?;
        for j in 0..spec.cols {
            let (t, a) = spec.column(j, n_actions);
            grid[[i, j]] = q[t][a];
        }
    }
    Ok(grid)
}

/// The grid alone: 100 lines of 100 comma-separated values, no header.
/// The axes go to a separate file (see [`write_qgrid_axes`]).
pub fn write_qgrid_csv(path: &Path, grid: &Array2<f64>) -> Result<()> {
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(&display, e);
    for row in grid.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_qgrid_csv(path: &Path) -> Result<Array2<f64>> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: display.clone(),
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Schema {
            path: display,
            message: "ragged Q-grid rows".into(),
        });
    }
    let flat: Vec<f64> = rows.concat();
    Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat).map_err(|e| Error::Schema {
        path: display,
        message: e.to_string(),
    })
}

/// The grid axes as JSON: the spec itself, which is enough to recompute
/// every cell from the network.
pub fn write_qgrid_axes(path: &Path, spec: &QGridSpec) -> Result<()> {
    let json = serde_json::to_string_pretty(spec)
        .map_err(|e| Error::Validation(format!("serializing Q-grid axes: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_qgrid_axes(path: &Path) -> Result<QGridSpec> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: display,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::network::NetworkSpec;
    use crate::rng::stream_rng;

    fn spec(dim: usize) -> QGridSpec {
        QGridSpec {
            row_feature: 1,
            row_values: (0..GRID_SIZE).map(|i| i as f64 / 100.0).collect(),
            templates: (0..4).map(|k| vec![k as f64 * 0.1; dim]).collect(),
            template_labels: ["Bidding", "Exploration", "Development", "Production"]
                .map(String::from)
                .to_vec(),
            cols: GRID_SIZE,
        }
    }

    #[test]
    fn shape_and_pointwise_values() {
        let net = QNetwork::new(NetworkSpec::new(6, 8), &mut stream_rng(1, 1)).unwrap();
        let s = spec(6);
        let grid = export_qgrid(&net, &s).unwrap();
        assert_eq!(grid.dim(), (100, 100));
        for (i, j) in [(0, 0), (17, 55), (99, 99), (50, 31)] {
            let (t, a) = s.column(j, 8);
            let mut x = s.templates[t].clone();
            x[1] = s.row_values[i];
            assert_eq!(grid[[i, j]], net.predict(&x).unwrap()[a]);
        }
    }

    #[test]
    fn constant_network_gives_constant_grid() {
        let mut net = QNetwork::zeros(NetworkSpec::new(6, 8)).unwrap();
        net.set_output_bias(&[2.5; 8]).unwrap();
        let grid = export_qgrid(&net, &spec(6)).unwrap();
        assert!(grid.iter().all(|v| *v == 2.5));
    }

    #[test]
    fn columns_cover_every_pair() {
        let s = spec(6);
        let pairs: std::collections::BTreeSet<_> = (0..100).map(|j| s.column(j, 8)).collect();
        assert_eq!(pairs.len(), 32);
    }

    #[test]
    fn files_round_trip_exactly() {
        let net = QNetwork::new(NetworkSpec::new(6, 8), &mut stream_rng(2, 1)).unwrap();
        let s = spec(6);
        let grid = export_qgrid(&net, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_qgrid_csv(&dir.path().join("g.csv"), &grid).unwrap();
        write_qgrid_axes(&dir.path().join("a.json"), &s).unwrap();
        assert_eq!(read_qgrid_csv(&dir.path().join("g.csv")).unwrap(), grid);
        assert_eq!(read_qgrid_axes(&dir.path().join("a.json")).unwrap(), s);
    }
}
