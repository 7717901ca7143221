//! Baseline-vs-shaped comparison across seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics;
use super::run::{read_manifest, RunManifest};
use super::HarnessError;

/// One variant's seeds aggregated at one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub step: u64,
    /// Mean over seeds of each seed's mean eval return.
    pub mean: f64,
    /// Lowest and highest per-seed mean.
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub env: String,
    pub algorithm: String,
    pub checkpoints: Vec<u64>,
    pub baseline: Vec<Band>,
    pub shaped: Vec<Band>,
    /// `(shaped - baseline) / |baseline|` in percent; `None` when the
    /// baseline is zero.
    pub improvement_pct: Vec<Option<f64>>,
}

pub fn improvement_pct(baseline: f64, shaped: f64) -> Option<f64> {
    (baseline != 0.0).then(|| 100.0 * (shaped - baseline) / baseline.abs())
}

/// Finished run directories under each path: the path itself if it holds
/// `run.json`, otherwise its `seed_*` children.
pub fn expand_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for p in paths {
        if p.join("run.json").exists() {
            out.push(p.clone());
            continue;
        }
        let entries = std::fs::read_dir(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| c.join("run.json").exists())
            .collect();
        children.sort();
        if children.is_empty() {
            return Err(HarnessError::Compare(format!("no finished runs under {}", p.display())));
        }
        out.extend(children);
    }
    Ok(out)
}

struct Loaded {
    manifest: RunManifest,
    /// (step, mean eval return)
    rows: Vec<(u64, f64)>,
}

fn load(dir: &Path) -> Result<Loaded, HarnessError> {
    let manifest = read_manifest(dir)?;
    let rows = metrics::read(&dir.join("metrics.csv"))
        .map_err(|e| HarnessError::Io(e.to_string()))?
        .into_iter()
        .map(|r| (r.step, r.mean_eval_return))
        .collect();
    Ok(Loaded { manifest, rows })
}

fn bands(runs: &[Loaded], checkpoints: &[u64]) -> Result<Vec<Band>, HarnessError> {
    checkpoints
        .iter()
        .map(|&step| {
            let values = runs
                .iter()
                .map(|r| {
                    r.rows.iter().find(|(s, _)| *s == step).map(|(_, v)| *v).ok_or_else(|| {
                        HarnessError::Compare(format!("seed {} has no checkpoint at step {step}", r.manifest.seed))
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(Band { step, mean, min, max })
        })
        .collect()
}

/// Aggregates both run sets at `checkpoints`, or at every step they share
/// when `checkpoints` is empty.
pub fn compare(baseline: &[PathBuf], shaped: &[PathBuf], checkpoints: &[u64]) -> Result<ComparisonReport, HarnessError> {
    let base = expand_runs(baseline)?.iter().map(|d| load(d)).collect::<Result<Vec<_>, _>>()?;
    let yolo = expand_runs(shaped)?.iter().map(|d| load(d)).collect::<Result<Vec<_>, _>>()?;
    let first = &base[0].manifest;
    for r in base.iter().chain(&yolo) {
        let m = &r.manifest;
        if m.total_steps != first.total_steps {
            return Err(HarnessError::Compare(format!(
                "step budgets differ: {} vs {}",
                first.total_steps, m.total_steps
            )));
        }
        if m.env != first.env || m.algorithm != first.algorithm {
            return Err(HarnessError::Compare(format!(
                "runs mix {}/{} with {}/{}",
                first.env, first.algorithm, m.env, m.algorithm
            )));
        }
    }
    let checkpoints: Vec<u64> = if checkpoints.is_empty() {
        let mut common: Vec<u64> = base[0].rows.iter().map(|(s, _)| *s).collect();
        common.retain(|s| base.iter().chain(&yolo).all(|r| r.rows.iter().any(|(t, _)| t == s)));
        common
    } else {
        checkpoints.to_vec()
    };
    let b = bands(&base, &checkpoints)?;
    let y = bands(&yolo, &checkpoints)?;
    let improvement_pct = b.iter().zip(&y).map(|(b, y)| improvement_pct(b.mean, y.mean)).collect();
    Ok(ComparisonReport {
        env: first.env.clone(),
        algorithm: first.algorithm.clone(),
        checkpoints,
        baseline: b,
        shaped: y,
        improvement_pct,
    })
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "step",
            "baseline_mean",
            "baseline_min",
            "baseline_max",
            "shaped_mean",
            "shaped_min",
            "shaped_max",
            "improvement_pct",
        ])
        .expect("in-memory write");
        for ((b, y), imp) in self.baseline.iter().zip(&self.shaped).zip(&self.improvement_pct) {
            w.write_record([
                b.step.to_string(),
                b.mean.to_string(),
                b.min.to_string(),
                b.max.to_string(),
                y.mean.to_string(),
                y.min.to_string(),
                y.max.to_string(),
                imp.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Fixed-width text table; the better mean at each checkpoint is starred.
    pub fn table(&self) -> String {
        let mut out = format!("{} / {}\n", self.env, self.algorithm);
        let _ = writeln!(out, "{:>10}  {:>22}  {:>22}  {:>10}", "step", "baseline", "shaped", "improve");
        for ((b, y), imp) in self.baseline.iter().zip(&self.shaped).zip(&self.improvement_pct) {
            let cell = |band: &Band, best: bool| {
                format!("{:.3} [{:.3},{:.3}]{}", band.mean, band.min, band.max, if best { "*" } else { " " })
            };
            let imp = imp.map(|v| format!("{v:+.1}%")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "{:>10}  {:>22}  {:>22}  {:>10}",
                b.step,
                cell(b, b.mean > y.mean),
                cell(y, y.mean > b.mean),
                imp
            );
        }
        out
    }

    /// Line plot of both variants: mean lines over shaded min-max bands.
    pub fn svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let steps: Vec<f64> = self.checkpoints.iter().map(|&s| s as f64).collect();
        let (x0, x1) = (steps.first().copied().unwrap_or(0.0), steps.last().copied().unwrap_or(1.0));
        let all = self.baseline.iter().chain(&self.shaped);
        let mut y0 = all.clone().map(|b| b.min).fold(f64::INFINITY, f64::min);
        let mut y1 = all.map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
        if !y0.is_finite() || !y1.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-9) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{} / {}: mean eval return</text>\n\
             <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n",
            w / 2.0,
            self.env,
            self.algorithm,
            h - pad,
            w - pad,
            h - pad,
            h - pad
        );
        for (v, anchor, x, y) in [
            (y0, "end", pad - 6.0, sy(y0) + 4.0),
            (y1, "end", pad - 6.0, sy(y1) + 4.0),
        ] {
            let _ = writeln!(out, "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{v:.2}</text>");
        }
        for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
            let _ = writeln!(
                out,
                "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{v}</text>",
                h - pad + 16.0
            );
        }
        for (bands, color, name, k) in [(&self.baseline, "#1f77b4", "baseline", 0.0), (&self.shaped, "#d62728", "shaped", 1.0)] {
            if bands.is_empty() {
                continue;
            }
            let upper: Vec<String> = bands.iter().map(|b| format!("{:.2},{:.2}", sx(b.step as f64), sy(b.max))).collect();
            let lower: Vec<String> =
                bands.iter().rev().map(|b| format!("{:.2},{:.2}", sx(b.step as f64), sy(b.min))).collect();
            let _ = writeln!(
                out,
                "<polygon points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                upper.join(" "),
                lower.join(" ")
            );
            let line: Vec<String> = bands.iter().map(|b| format!("{:.2},{:.2}", sx(b.step as f64), sy(b.mean))).collect();
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                line.join(" ")
            );
            let ly = pad + 14.0 * k;
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>",
                w - pad - 70.0
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
