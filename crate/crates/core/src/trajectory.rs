//! Per-iteration records shared by ambient descent and network training, their
//! CSV form, and detectors for the plateau-then-escape shape of runs started
//! near a saddle.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,loss,grad_norm,dist,labels,step,escape_event";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajRecord {
    pub iter: usize,
    /// `||Y Y^T - A||_F^2` (no one-half factor).
    pub loss: f64,
    pub grad_norm: f64,
    /// Distance to the class of `Y*`; NaN when undefined (rank-deficient `Y`).
    pub dist: f64,
    /// Semicolon-joined region labels, possibly empty.
    pub labels: String,
    pub step: f64,
    pub escape_event: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajRecord>,
}

impl Trajectory {
    pub fn push(&mut self, rec: TrajRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.iter < rec.iter));
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&TrajRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TrajRecord> {
        self.records.last()
    }

    pub fn iters(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.iter).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.grad_norm).collect()
    }

    pub fn dists(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dist).collect()
    }

    pub fn escape_events(&self) -> usize {
        self.records.iter().filter(|r| r.escape_event).count()
    }

    /// Writes the CSV body: header line then one row per record. `meta`
    /// lines, if any, are written first as `# `-prefixed comments.
    pub fn write_csv<W: Write>(&self, mut w: W, meta: &[String]) -> Result<()> {
        for m in meta {
            writeln!(w, "# {m}")?;
        }
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.iter,
                r.loss,
                r.grad_norm,
                r.dist,
                r.labels,
                r.step,
                u8::from(r.escape_event)
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut out = Trajectory::default();
        let mut saw_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != CSV_HEADER {
                    return Err(Error::Parse(format!("unexpected trajectory header '{line}'")));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Parse(format!("line {}: expected 7 fields", lineno + 1)));
            }
            let num =
                |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)));
            out.records.push(TrajRecord {
                iter: f[0].parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
                loss: num(f[1])?,
                grad_norm: num(f[2])?,
                dist: num(f[3])?,
                labels: f[4].to_string(),
                step: num(f[5])?,
                escape_event: f[6] == "1",
            });
        }
        if !saw_header {
            return Err(Error::Parse("missing trajectory header".into()));
        }
        Ok(out)
    }
}

/// A stretch where a gradient-norm series sits within a factor of its local
/// minimum before rising out of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradPlateau {
    pub min_index: usize,
    pub min_value: f64,
    /// Inclusive sample range of the plateau.
    pub start: usize,
    pub end: usize,
    /// First sample at or above `factor * min_value` after the plateau.
    pub escape_index: usize,
    /// Largest value after the escape.
    pub peak: f64,
    /// Value of the last sample.
    pub final_value: f64,
}

impl GradPlateau {
    pub fn samples(&self) -> usize {
        self.end - self.start + 1
    }

    /// Length of the plateau in iterations, given the recorded iteration
    /// indices.
    pub fn iterations(&self, iters: &[usize]) -> usize {
        iters[self.end] - iters[self.start] + 1
    }

    /// Whether the series finished below the post-escape peak by `factor`.
    pub fn decays_after(&self, factor: f64) -> bool {
        self.final_value * factor <= self.peak
    }
}

/// Splits the series into trough-then-rise events: the running minimum is
/// tracked until a sample reaches `factor` times it, then tracking restarts
/// from that sample. The event whose peak (before the next event's trough)
/// is largest relative to its trough is returned, with the plateau being the
/// contiguous window around the trough that stays below `factor * min`.
pub fn detect_grad_plateau(values: &[f64], factor: f64) -> Option<GradPlateau> {
    // (trough index, escape index)
    let mut events: Vec<(usize, usize)> = Vec::new();
    let mut trough = 0;
    for (j, &v) in values.iter().enumerate() {
        if v < values[trough] {
            trough = j;
        } else if values[trough] > 0.0 && v >= factor * values[trough] {
            events.push((trough, j));
            trough = j;
        }
    }
    let mut best: Option<(GradPlateau, f64)> = None;
    for (e, &(min_index, escape_index)) in events.iter().enumerate() {
        let stop = events.get(e + 1).map_or(values.len(), |n| n.0);
        let peak = values[escape_index..stop].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_value = values[min_index];
        let ratio = peak / min_value;
        if best.as_ref().is_some_and(|(_, r)| *r >= ratio) {
            continue;
        }
        let bound = factor * min_value;
        let mut start = min_index;
        while start > 0 && values[start - 1] < bound {
            start -= 1;
        }
        let end = escape_index - 1;
        let plateau = GradPlateau {
            min_index,
            min_value,
            start,
            end,
            escape_index,
            peak,
            final_value: *values.last()?,
        };
        best = Some((plateau, ratio));
    }
    best.map(|(p, _)| p)
}

/// A flat initial stretch of a distance series followed by a drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistPlateau {
    pub level: f64,
    /// Samples before the series first leaves `level * (1 +- band)`.
    pub samples: usize,
    /// `level / final value`.
    pub drop_ratio: f64,
}

impl DistPlateau {
    pub fn iterations(&self, iters: &[usize]) -> usize {
        if self.samples == 0 {
            0
        } else {
            iters[self.samples - 1] - iters[0] + 1
        }
    }
}

/// Change-point test on a distance-to-optimum series: the plateau level is
/// the median of the first `warmup` samples; the plateau ends at the first
/// later sample outside `level * (1 +- band)`.
pub fn detect_dist_plateau(values: &[f64], band: f64, warmup: usize) -> Option<DistPlateau> {
    if values.is_empty() {
        return None;
    }
    let w = warmup.clamp(1, values.len());
    let mut head: Vec<f64> = values[..w].to_vec();
    head.sort_by(f64::total_cmp);
    let level = head[w / 2];
    if !(level > 0.0) {
        return None;
    }
    let samples =
        values.iter().skip(w).position(|&v| (v - level).abs() > band * level).map_or(values.len(), |p| p + w);
    let last = *values.last()?;
    Some(DistPlateau { level, samples, drop_ratio: level / last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, g: f64) -> TrajRecord {
        TrajRecord {
            iter: i,
            loss: 1.5,
            grad_norm: g,
            dist: 0.25,
            labels: "R1;R3a".into(),
            step: 0.01,
            escape_event: i == 3,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Trajectory::default();
        for i in 0..5 {
            t.push(rec(i * 2, 1.0 / (i + 1) as f64));
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "# seed=1\niter,loss,grad_norm,dist,labels,step,escape_event\n0,1.5,1,0.25,R1;R3a,0.01,0\n"
        ));
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(Trajectory::read_csv(&b"a,b\n"[..]).is_err());
    }

    #[test]
    fn grad_plateau_shape() {
        // fast decay, long flat stretch, escape bump, final decay
        let mut v = vec![1.0, 0.1, 0.01];
        v.extend(std::iter::repeat_n(0.001, 50));
        v.extend([0.005, 0.02, 0.1, 0.01, 1e-4, 1e-6]);
        let p = detect_grad_plateau(&v, 10.0).unwrap();
        assert_eq!(p.start, 3);
        assert_eq!(p.end, 53);
        assert_eq!(p.samples(), 51);
        assert_eq!(v[p.escape_index], 0.02);
        assert!(p.decays_after(10.0));
    }

    #[test]
    fn early_spike_does_not_hide_the_plateau() {
        let mut v = vec![0.2, 4.0, 2.0, 1.0, 0.5];
        v.extend(std::iter::repeat_n(0.4, 20));
        v.extend([1.0, 5.0, 17.0, 1.0, 1e-3]);
        let p = detect_grad_plateau(&v, 10.0).unwrap();
        assert_eq!(p.min_value, 0.4);
        assert_eq!(v[p.escape_index], 5.0);
        assert_eq!(p.peak, 17.0);
    }

    #[test]
    fn monotone_series_has_no_plateau() {
        let v: Vec<f64> = (0..100).map(|i| (-(i as f64)).exp()).collect();
        assert!(detect_grad_plateau(&v, 10.0).is_none());
    }

    #[test]
    fn dist_plateau_then_drop() {
        let mut v = vec![2.0; 40];
        v.extend([1.5, 0.5, 0.1, 0.01]);
        let p = detect_dist_plateau(&v, 0.05, 5).unwrap();
        assert_eq!(p.samples, 40);
        assert!((p.drop_ratio - 200.0).abs() < 1e-9);
    }
}
