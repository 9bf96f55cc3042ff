use std::path::{Path, PathBuf};

use serde::Serialize;

use super::files::{mean_std, read_metrics};
use super::Manifest;
use crate::error::{Error, Result};

/// Percentile with linear interpolation between order statistics
/// (`p` in `[0, 100]`). `None` for an empty input.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

/// What [`report`] found and wrote.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    pub runs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Pooled 98th percentile of all per-step costs.
    pub cost_p98: Option<f64>,
}

fn find_runs(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("manifest.toml").is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    if depth == 0 {
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        find_runs(&e, depth - 1, out)?;
    }
    Ok(())
}

fn seed_files(dir: &Path, prefix: &str) -> Result<Vec<(u64, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(seed) = name
            .strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(".csv"))
            .and_then(|s| s.parse().ok())
        {
            out.push((seed, path));
        }
    }
    out.sort();
    Ok(out)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let header = r.headers().map_err(err)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()).map_err(err))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn write(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct MethodSummary {
    run: String,
    method: String,
    seeds: usize,
    ttt_mean: f64,
    ttt_std: f64,
    cvv_mean: f64,
    cvv_std: f64,
    wct_mean: f64,
    wct_std: f64,
}

/// Collects every run under `dir` (the directory itself or up to three
/// levels below it) into `dir/report/`: training curves, station power,
/// station occupancy, per-step cost distribution with its 98th percentile,
/// and a per-run summary.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    if !dir.is_dir() {
        return Err(Error::InsufficientData(format!("{} is not a directory", dir.display())));
    }
    let mut runs = Vec::new();
    find_runs(dir, 3, &mut runs)?;
    if runs.is_empty() {
        return Err(Error::InsufficientData(format!("no run artifacts under {}", dir.display())));
    }
    let out_dir = dir.join("report");
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut curves: Option<Table> = None;
    let mut power = Table::new(&["run", "method", "seed", "t", "setpoint_kw", "total_kw"]);
    let mut occupancy = Table::new(&["run", "method", "seed", "t", "station", "occupancy"]);
    let mut costs = Table::new(&["run", "method", "seed", "step", "cost"]);
    let mut cost_summary = Table::new(&["run", "method", "samples", "mean", "p98"]);
    let mut summaries = Vec::new();
    let mut pooled = Vec::new();

    for run in &runs {
        let manifest_path = run.join("manifest.toml");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
            path: manifest_path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        let name = run.strip_prefix(dir).unwrap_or(run).display().to_string();
        let name = if name.is_empty() { ".".to_string() } else { name };
        let tag = |seed: u64| vec![name.clone(), manifest.method.clone(), seed.to_string()];

        for (seed, path) in seed_files(&run.join("curves"), "seed")? {
            let (header, rows) = read_table(&path)?;
            if header.is_empty() {
                continue;
            }
            let table = curves.get_or_insert_with(|| {
                let mut h = vec!["run".to_string(), "method".into(), "seed".into()];
                h.extend(header.iter().cloned());
                Table { header: h, rows: Vec::new() }
            });
            for r in rows {
                let mut row = tag(seed);
                row.extend(r);
                table.rows.push(row);
            }
        }
        for (seed, path) in seed_files(&run.join("traces"), "power_seed")? {
            let (_, rows) = read_table(&path)?;
            for r in rows.into_iter().filter(|r| r.len() >= 3) {
                let mut row = tag(seed);
                row.extend(r[..3].iter().cloned());
                power.rows.push(row);
            }
        }
        for (seed, path) in seed_files(&run.join("traces"), "occupancy_seed")? {
            let (header, rows) = read_table(&path)?;
            for r in rows {
                for (station, v) in header.iter().zip(&r).skip(1) {
                    let mut row = tag(seed);
                    row.extend([r[0].clone(), station.clone(), v.clone()]);
                    occupancy.rows.push(row);
                }
            }
        }
        let mut run_costs = Vec::new();
        for (seed, path) in seed_files(&run.join("traces"), "costs_seed")? {
            let (header, rows) = read_table(&path)?;
            let step_col = header.iter().position(|h| h == "step");
            let cost_col = header.iter().position(|h| h == "cost");
            let (Some(sc), Some(cc)) = (step_col, cost_col) else {
                return Err(Error::Parse {
                    path,
                    line: 1,
                    message: "expected step and cost columns".into(),
                });
            };
            for r in rows {
                let c: f64 = r[cc].parse().map_err(|_| Error::Parse {
                    path: path.clone(),
                    line: 0,
                    message: format!("bad cost {:?}", r[cc]),
                })?;
                run_costs.push(c);
                let mut row = tag(seed);
                row.extend([r[sc].clone(), r[cc].clone()]);
                costs.rows.push(row);
            }
        }
        if !run_costs.is_empty() {
            let (mean, _) = mean_std(&run_costs);
            cost_summary.rows.push(vec![
                name.clone(),
                manifest.method.clone(),
                run_costs.len().to_string(),
                mean.to_string(),
                percentile(&run_costs, 98.0).map_or(String::new(), |p| p.to_string()),
            ]);
            pooled.extend(run_costs);
        }
        let metrics_path = run.join("metrics.csv");
        if metrics_path.is_file() {
            let rows = read_metrics(&metrics_path)?;
            let col = |f: fn(&super::MetricsRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
            let (ttt_mean, ttt_std) = mean_std(&col(|r| r.ttt_s));
            let (cvv_mean, cvv_std) = mean_std(&col(|r| r.cvv));
            let (wct_mean, wct_std) = mean_std(&col(|r| r.wct_min));
            summaries.push(MethodSummary {
                run: name.clone(),
                method: manifest.method.clone(),
                seeds: rows.len(),
                ttt_mean,
                ttt_std,
                cvv_mean,
                cvv_std,
                wct_mean,
                wct_std,
            });
        }
    }

    let cost_p98 = percentile(&pooled, 98.0);
    if let Some(p) = cost_p98 {
        let (mean, _) = mean_std(&pooled);
        cost_summary
            .rows
            .push(vec!["all".into(), "all".into(), pooled.len().to_string(), mean.to_string(), p.to_string()]);
    }
    if let Some(c) = &curves {
        c.write(&out_dir.join("training_curves.csv"))?;
    }
    power.write(&out_dir.join("power.csv"))?;
    occupancy.write(&out_dir.join("occupancy.csv"))?;
    costs.write(&out_dir.join("cost_distribution.csv"))?;
    cost_summary.write(&out_dir.join("cost_summary.csv"))?;
    let path = out_dir.join("summary.csv");
    let err = |e: csv::Error| Error::io(&path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    for s in &summaries {
        w.serialize(s).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(ReportSummary { runs, out_dir, cost_p98 })
}
