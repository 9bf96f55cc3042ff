use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricsRecord, SweepAxis};
use crate::error::{Error, Result};
use crate::predictor::DemandPredictor;
use crate::srl::{CurveRow, EvalOutcome, Method};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Deterministic part of a metrics record, one row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub ttt_s: f64,
    pub cvv: f64,
    pub wct_min: f64,
    pub num_vehicles: usize,
    pub num_ev: usize,
    pub steps: usize,
    pub stranded: usize,
}

impl From<&MetricsRecord> for MetricsRow {
    fn from(r: &MetricsRecord) -> Self {
        MetricsRow {
            seed: r.seed,
            ttt_s: r.ttt_s,
            cvv: r.cvv,
            wct_min: r.wct_min,
            num_vehicles: r.num_vehicles,
            num_ev: r.num_ev,
            steps: r.steps,
            stranded: r.stranded,
        }
    }
}

pub(crate) fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_rows(path, records.iter().map(MetricsRow::from))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Serialize)]
struct TimingRow {
    method: Method,
    seed: u64,
    et_s: f64,
    dt_s: f64,
}

pub(crate) fn write_timing(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_rows(
        path,
        records.iter().map(|r| TimingRow {
            method: r.method,
            seed: r.seed,
            et_s: r.et_s,
            dt_s: r.dt_s,
        }),
    )
}

/// Mean and sample standard deviation (zero for a single value).
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct SummaryRow {
    method: Method,
    seeds: usize,
    ttt_mean: f64,
    ttt_std: f64,
    cvv_mean: f64,
    cvv_std: f64,
    wct_mean: f64,
    wct_std: f64,
    et_mean: f64,
    dt_mean: f64,
}

fn summary_rows(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let rs: Vec<&MetricsRecord> = records.iter().filter(|r| r.method == m).collect();
            let col = |f: fn(&MetricsRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (ttt_mean, ttt_std) = mean_std(&col(|r| r.ttt_s));
            let (cvv_mean, cvv_std) = mean_std(&col(|r| r.cvv));
            let (wct_mean, wct_std) = mean_std(&col(|r| r.wct_min));
            SummaryRow {
                method: m,
                seeds: rs.len(),
                ttt_mean,
                ttt_std,
                cvv_mean,
                cvv_std,
                wct_mean,
                wct_std,
                et_mean: mean_std(&col(|r| r.et_s)).0,
                dt_mean: mean_std(&col(|r| r.dt_s)).0,
            }
        })
        .collect()
}

pub(crate) fn write_summary(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_rows(path, summary_rows(records))
}

#[derive(Serialize)]
struct CurveCsv {
    epoch: usize,
    mean_ttt_s: f64,
    mean_cvv: f64,
    mean_wct_s: f64,
    mean_reward: f64,
    lambda: f64,
    cost_return: f64,
    predictor_loss: Option<f64>,
    predictor_converged: bool,
}

pub(crate) fn write_curve(path: &Path, curve: &[CurveRow]) -> Result<()> {
    write_rows(
        path,
        curve.iter().map(|r| CurveCsv {
            epoch: r.epoch,
            mean_ttt_s: r.mean_ttt_s,
            mean_cvv: r.mean_cvv,
            mean_wct_s: r.mean_wct_s,
            mean_reward: r.mean_reward,
            lambda: r.lambda,
            cost_return: r.cost_return,
            predictor_loss: r.predictor_loss,
            predictor_converged: r.predictor_converged,
        }),
    )
}

#[derive(Serialize)]
struct LossRow {
    train_step: usize,
    loss: f64,
    smoothed: f64,
}

pub(crate) fn write_losses(path: &Path, p: &DemandPredictor) -> Result<()> {
    let smoothed = p.smoothed_losses();
    write_rows(
        path,
        p.losses().iter().zip(&smoothed).enumerate().map(|(i, (&loss, &smoothed))| LossRow {
            train_step: i,
            loss,
            smoothed,
        }),
    )
}

#[derive(Serialize)]
struct DroopRow {
    interval: usize,
    t: u64,
    v_bar: f64,
    setpoint_kw: f64,
}

#[derive(Serialize)]
struct CostRow {
    step: usize,
    t: u64,
    cost: f64,
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    t: u64,
    vehicle: usize,
    action: usize,
    executed: usize,
    reward: f64,
    cost: f64,
    elapsed_sim_s: u64,
}

#[derive(Serialize)]
struct EventRow<'a> {
    t: u64,
    vehicle: usize,
    event: &'a str,
    place: &'a str,
}

/// Power, occupancy, droop and cost traces of an evaluation episode; the
/// per-step and per-event traces only when `full`.
pub(crate) fn write_traces(dir: &Path, seed: u64, eval: &EvalOutcome, full: bool) -> Result<()> {
    let env = eval.env.inner();
    let sim = env.sim().ok_or(Error::EpisodeNotTerminal)?;
    let ids: Vec<u32> = env.scenario().stations.iter().map(|s| s.id).collect();

    let mut header = vec!["t".to_string(), "setpoint_kw".into(), "total_kw".into()];
    header.extend(ids.iter().map(|id| format!("cs{id}_kw")));
    let rows: Vec<Vec<String>> = sim
        .load_samples()
        .iter()
        .map(|s| {
            let mut r = vec![s.t.to_string(), s.setpoint_kw.to_string(), s.total_kw().to_string()];
            r.extend(s.loads_kw.iter().map(f64::to_string));
            r
        })
        .collect();
    write_records(&dir.join(format!("power_seed{seed}.csv")), &header, &rows)?;

    let mut header = vec!["t".to_string()];
    header.extend(ids.iter().map(|id| format!("cs{id}")));
    let rows: Vec<Vec<String>> = sim
        .load_samples()
        .iter()
        .map(|s| {
            let mut r = vec![s.t.to_string()];
            r.extend(s.occupancy.iter().map(usize::to_string));
            r
        })
        .collect();
    write_records(&dir.join(format!("occupancy_seed{seed}.csv")), &header, &rows)?;

    write_rows(
        &dir.join(format!("droop_seed{seed}.csv")),
        sim.droop_log().iter().map(|d| DroopRow {
            interval: d.interval,
            t: d.t,
            v_bar: d.v_bar,
            setpoint_kw: d.setpoint_kw,
        }),
    )?;
    write_rows(
        &dir.join(format!("costs_seed{seed}.csv")),
        env.steps().iter().map(|s| CostRow {
            step: s.step,
            t: s.t,
            cost: s.cost,
        }),
    )?;
    if full {
        write_rows(
            &dir.join(format!("steps_seed{seed}.csv")),
            env.steps().iter().map(|s| StepRow {
                step: s.step,
                t: s.t,
                vehicle: s.vehicle,
                action: s.action,
                executed: s.executed,
                reward: s.reward,
                cost: s.cost,
                elapsed_sim_s: s.elapsed_sim_s,
            }),
        )?;
        if let Some(events) = sim.events() {
            write_rows(
                &dir.join(format!("events_seed{seed}.csv")),
                events.iter().map(|e| EventRow {
                    t: e.t,
                    vehicle: e.vehicle,
                    event: e.event,
                    place: &e.place,
                }),
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    axis: &'static str,
    value: f64,
    method: Method,
    seed: u64,
    ttt_s: f64,
    cvv: f64,
    wct_min: f64,
    steps: usize,
}

#[derive(Serialize)]
struct SweepSummaryRow {
    axis: &'static str,
    value: f64,
    method: Method,
    seeds: usize,
    ttt_mean: f64,
    ttt_std: f64,
    cvv_mean: f64,
    cvv_std: f64,
    wct_mean: f64,
    wct_std: f64,
}

pub(crate) fn write_sweep(dir: &Path, axis: SweepAxis, rows: &[(f64, MetricsRecord)]) -> Result<()> {
    write_rows(
        &dir.join("sweep.csv"),
        rows.iter().map(|(v, r)| SweepRow {
            axis: axis.as_str(),
            value: *v,
            method: r.method,
            seed: r.seed,
            ttt_s: r.ttt_s,
            cvv: r.cvv,
            wct_min: r.wct_min,
            steps: r.steps,
        }),
    )?;
    let mut groups: BTreeMap<(u64, &'static str), (f64, Method, Vec<&MetricsRecord>)> = BTreeMap::new();
    for (i, (v, r)) in rows.iter().enumerate() {
        let first = rows.iter().position(|(w, _)| w.to_bits() == v.to_bits()).unwrap_or(i) as u64;
        groups.entry((first, r.method.as_str())).or_insert((*v, r.method, Vec::new())).2.push(r);
    }
    write_rows(
        &dir.join("sweep_summary.csv"),
        groups.into_values().map(|(value, method, rs)| {
            let col = |f: fn(&MetricsRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (ttt_mean, ttt_std) = mean_std(&col(|r| r.ttt_s));
            let (cvv_mean, cvv_std) = mean_std(&col(|r| r.cvv));
            let (wct_mean, wct_std) = mean_std(&col(|r| r.wct_min));
            SweepSummaryRow {
                axis: axis.as_str(),
                value,
                method,
                seeds: rs.len(),
                ttt_mean,
                ttt_std,
                cvv_mean,
                cvv_std,
                wct_mean,
                wct_std,
            }
        }),
    )
}
