//! Heatmap grids, CSV/PPM writers and the normalized-difference histogram.

use std::fmt::Write as _;

use super::SimError;
use crate::em::NO_SIGNAL_DBM;

/// Width of one histogram bin, as a fraction of |a|.
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// Lower-left corner of the grid, m.
    pub origin: (f64, f64),
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    /// RSP in dBm, row-major with x fastest; `NO_SIGNAL_DBM` where no path exists.
    pub values: Vec<f64>,
}

fn is_sentinel(v: f64) -> bool {
    v <= NO_SIGNAL_DBM
}

impl Heatmap {
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,rsp_dbm\n");
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let (x, y) = self.cell_center(ix, iy);
                let _ = writeln!(s, "{x:.4},{y:.4},{:.6}", self.get(ix, iy));
            }
        }
        s
    }

    /// Read a grid back from `x,y,rsp_dbm` rows in the order [`to_csv`](Self::to_csv) writes.
    pub fn from_csv(text: &str) -> Result<Heatmap, SimError> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() {
                if i == 0 && line != "x,y,rsp_dbm" {
                    return Err(SimError::config(
                        Some(1),
                        format!("expected header 'x,y,rsp_dbm', got '{line}'"),
                    ));
                }
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| SimError::config(Some(i + 1), format!("malformed row '{line}'")))?;
            if f.len() != 3 {
                return Err(SimError::config(
                    Some(i + 1),
                    format!("expected 3 columns, got {}", f.len()),
                ));
            }
            rows.push((f[0], f[1], f[2]));
        }
        if rows.is_empty() {
            return Err(SimError::config(None, "heatmap CSV has no cells"));
        }
        let y0 = rows[0].1;
        let nx = rows.iter().take_while(|r| r.1 == y0).count();
        if !rows.len().is_multiple_of(nx) {
            return Err(SimError::config(
                None,
                format!("{} cells do not form rows of {nx}", rows.len()),
            ));
        }
        let ny = rows.len() / nx;
        let resolution = if nx > 1 {
            rows[1].0 - rows[0].0
        } else if ny > 1 {
            rows[nx].1 - rows[0].1
        } else {
            1.0
        };
        Ok(Heatmap {
            origin: (rows[0].0 - resolution / 2.0, y0 - resolution / 2.0),
            resolution,
            nx,
            ny,
            values: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// Binary P6 image, north up. Hue runs from blue at `window.0` to red at
    /// `window.1`; cells without signal are black.
    pub fn to_ppm(&self, window: (f64, f64)) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        out.reserve(self.nx * self.ny * 3);
        for iy in (0..self.ny).rev() {
            for ix in 0..self.nx {
                out.extend_from_slice(&false_color(self.get(ix, iy), window));
            }
        }
        out
    }
}

pub fn false_color(dbm: f64, window: (f64, f64)) -> [u8; 3] {
    if is_sentinel(dbm) || !dbm.is_finite() {
        return [0, 0, 0];
    }
    let t = ((dbm - window.0) / (window.1 - window.0)).clamp(0.0, 1.0);
    let hue = 240.0 * (1.0 - t) / 60.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        _ => (0.0, 0.0, 1.0),
    };
    let q = |c: f64| (c * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// Upper edges of the closed-right bins; the last bin is unbounded.
    pub upper_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub compared: u64,
    /// Cells skipped because either grid had no signal there.
    pub excluded: u64,
}

impl Histogram {
    pub fn percents(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| {
                if self.compared == 0 {
                    0.0
                } else {
                    100.0 * c as f64 / self.compared as f64
                }
            })
            .collect()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0u64;
        self.counts
            .iter()
            .map(|&c| {
                acc += c;
                if self.compared == 0 {
                    0.0
                } else {
                    100.0 * acc as f64 / self.compared as f64
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lower,upper,count,percent,cumulative_percent\n");
        let mut lower = 0.0;
        for (((upper, count), pct), cum) in self
            .upper_edges
            .iter()
            .zip(&self.counts)
            .zip(self.percents())
            .zip(self.cumulative())
        {
            let _ = writeln!(s, "{lower:.4},{upper:.4},{count},{pct:.4},{cum:.4}");
            lower = *upper;
        }
        let _ = writeln!(
            s,
            "# compared = {}, excluded = {}",
            self.compared, self.excluded
        );
        s
    }
}

/// Distribution of |a − b| / |a| over cells, in `bins` bins of width
/// [`HISTOGRAM_BIN_WIDTH`] with the last one open-ended.
pub fn diff_histogram(a: &Heatmap, b: &Heatmap, bins: usize) -> Result<Histogram, SimError> {
    if a.nx != b.nx || a.ny != b.ny {
        return Err(SimError::config(
            None,
            format!("grid shapes differ: {}x{} vs {}x{}", a.nx, a.ny, b.nx, b.ny),
        ));
    }
    if bins == 0 {
        return Err(SimError::config(None, "need at least one bin"));
    }
    let mut upper_edges: Vec<f64> = (1..bins).map(|k| k as f64 * HISTOGRAM_BIN_WIDTH).collect();
    upper_edges.push(f64::INFINITY);
    let mut counts = vec![0u64; bins];
    let (mut compared, mut excluded) = (0u64, 0u64);
    for (&va, &vb) in a.values.iter().zip(&b.values) {
        if is_sentinel(va) || is_sentinel(vb) {
            excluded += 1;
            continue;
        }
        let d = (va - vb).abs() / va.abs();
        let k = upper_edges.iter().position(|&e| d <= e).unwrap_or(bins - 1);
        counts[k] += 1;
        compared += 1;
    }
    Ok(Histogram {
        upper_edges,
        counts,
        compared,
        excluded,
    })
}
