//! CSV and JSON file formats.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use fcw_redteam_core::alert::simulate_driver;
use fcw_redteam_core::dynamics::VehicleTrack;
use fcw_redteam_core::harness::{Prepared, SweepRow};
use fcw_redteam_core::scenario::GroundTruth;
use fcw_redteam_core::{AttackResult, MeasurementFrame, Strategy, WarningLight};
use serde::Serialize;

use crate::CliError;

pub const TRACE_HEADER: [&str; 11] = [
    "t", "v_d1", "v_v1", "v_d2", "v_v2", "r_d1", "r_v1", "r_d2", "r_v2", "gt_d1", "gt_v1",
];

const TRUTH_HEADER: [&str; 10] = [
    "t",
    "ego_pos",
    "ego_speed",
    "ego_accel",
    "mio_pos",
    "mio_speed",
    "mio_accel",
    "trailing_pos",
    "trailing_speed",
    "trailing_accel",
];

/// Shortest round-trip representation; `NaN` and `inf` spelled out.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_trace(path: &Path, frames: &[MeasurementFrame], truth: &[GroundTruth]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER).map_err(|e| io_err(path, e))?;
    for (k, f) in frames.iter().enumerate() {
        let mut rec = vec![(k + 1).to_string()];
        rec.extend(f.0.iter().map(|&x| num(x)));
        match truth.get(k) {
            Some(g) => rec.extend([num(g.d1()), num(g.v1())]),
            None => rec.extend(["NaN".to_string(), "NaN".to_string()]),
        }
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

pub fn write_truth(path: &Path, truth: &[GroundTruth]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(TRUTH_HEADER).map_err(|e| io_err(path, e))?;
    for (k, g) in truth.iter().enumerate() {
        let mut rec = vec![(k + 1).to_string()];
        for v in [g.ego, g.mio, g.trailing] {
            rec.extend([num(v.position), num(v.speed), num(v.accel)]);
        }
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(&e))?;
    let got: Vec<String> = r.headers().map_err(|e| bad(&e))?.iter().map(str::to_string).collect();
    if got.len() < header.len() || got.iter().zip(header).any(|(a, b)| a != b) {
        return Err(bad(&format!("expected header {}", header.join(","))));
    }
    Ok(r)
}

fn parse_row(path: &Path, line: usize, rec: &csv::StringRecord, width: usize) -> Result<Vec<f64>, CliError> {
    if rec.len() < width {
        return Err(CliError::Usage(format!("{}:{line}: expected {width} columns", path.display())));
    }
    rec.iter()
        .take(width)
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{}:{line}: not a number: '{s}'", path.display())))
        })
        .collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<MeasurementFrame>, CliError> {
    let mut r = reader(path, &TRACE_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let v = parse_row(path, k + 2, &rec, 9)?;
        let mut f = [0.0; 8];
        f.copy_from_slice(&v[1..9]);
        out.push(MeasurementFrame(f));
    }
    if out.len() < 2 {
        return Err(CliError::Usage(format!("{}: a trace needs at least 2 rows", path.display())));
    }
    Ok(out)
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>, CliError> {
    let mut r = reader(path, &TRUTH_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let v = parse_row(path, k + 2, &rec, 10)?;
        let track = |i: usize| VehicleTrack {
            position: v[i],
            speed: v[i + 1],
            accel: v[i + 2],
        };
        out.push(GroundTruth {
            ego: track(1),
            mio: track(4),
            trailing: track(7),
        });
    }
    Ok(out)
}

fn light(l: Option<WarningLight>) -> String {
    l.map(|l| l.code().to_string()).unwrap_or_default()
}

/// One row per step. Manipulation columns are dropped for the no-attack run.
pub fn write_steps(path: &Path, res: &AttackResult) -> Result<(), CliError> {
    let manip = res.strategy != Strategy::None;
    let slots = ["d1", "v1", "d2", "v2", "rd1", "rv1", "rd2", "rv2"];
    let state = ["d1", "v1", "a1", "d2", "v2", "a2"];
    let mut header = vec!["t".to_string(), "role".to_string()];
    header.extend(slots.iter().map(|s| format!("y_{s}")));
    if manip {
        header.extend(slots.iter().map(|s| format!("delta_{s}")));
    }
    header.extend(state.iter().map(|s| format!("clean_{s}")));
    if manip {
        header.extend(state.iter().map(|s| format!("att_{s}")));
    }
    header.extend(["light_clean", "light_attacked", "desired", "xi", "zeta"].map(String::from));
    if res.strategy == Strategy::Mpc {
        header.extend(["qp_iterations", "qp_kkt", "qp_objective"].map(String::from));
    }
    let mut w = writer(path)?;
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for r in &res.records {
        let mut rec = vec![r.t.to_string(), format!("{:?}", r.role).to_lowercase()];
        rec.extend(r.y.0.iter().map(|&x| num(x)));
        if manip {
            rec.extend(r.delta.iter().map(|&x| num(x)));
        }
        rec.extend(r.clean.to_vector().iter().map(|&x| num(x)));
        if manip {
            rec.extend(r.attacked.to_vector().iter().map(|&x| num(x)));
        }
        rec.extend([
            light(Some(r.light_clean)),
            light(Some(r.light_attacked)),
            light(r.desired),
            num(r.xi),
            num(r.zeta),
        ]);
        if res.strategy == Strategy::Mpc {
            match r.qp {
                Some(q) => rec.extend([q.iterations.to_string(), num(q.kkt_residual), num(q.objective)]),
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

/// Per-step data for plots of measurements and of the estimated `(d, v)`
/// trajectory, before and after the attack.
pub fn write_plot(path: &Path, prep: &Prepared, res: &AttackResult) -> Result<(), CliError> {
    let h = prep.experiment.h_star;
    let brake_clean = simulate_driver(&res.lights_clean(), h);
    let brake_att = simulate_driver(&res.lights_attacked(), h);
    let mut w = writer(path)?;
    w.write_record([
        "t",
        "meas_d1",
        "meas_v1",
        "att_meas_d1",
        "att_meas_v1",
        "est_d1",
        "est_v1",
        "att_est_d1",
        "att_est_v1",
        "light_clean",
        "light_attacked",
        "braking_clean",
        "braking_attacked",
        "gt_d1",
        "gt_v1",
    ])
    .map_err(|e| io_err(path, e))?;
    for (k, r) in res.records.iter().enumerate() {
        let (gd, gv) = prep.truth.get(k).map(|g| (g.d1(), g.v1())).unwrap_or((f64::NAN, f64::NAN));
        let rec = [
            r.t.to_string(),
            num(r.y.0[0]),
            num(r.y.0[1]),
            num(r.y_attacked.0[0]),
            num(r.y_attacked.0[1]),
            num(r.clean.d1),
            num(r.clean.v1),
            num(r.attacked.d1),
            num(r.attacked.v1),
            r.light_clean.code().to_string(),
            r.light_attacked.code().to_string(),
            u8::from(brake_clean[k]).to_string(),
            u8::from(brake_att[k]).to_string(),
            num(gd),
            num(gv),
        ];
        w.write_record(rec).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

pub const SWEEP_HEADER: [&str; 17] = [
    "scenario",
    "strategy",
    "fraction",
    "stealthy_len",
    "delta",
    "v_target",
    "v_stealth",
    "j1",
    "j2",
    "j3",
    "j",
    "achieved",
    "collided",
    "crash_step",
    "min_gap",
    "penetration",
    "error",
];

pub fn sweep_record(r: &SweepRow) -> Vec<String> {
    let opt = |x: Option<String>| x.unwrap_or_default();
    let m = r.metrics.as_ref();
    let c = r.crash.as_ref();
    vec![
        r.scenario.clone(),
        r.strategy.name().to_string(),
        num(r.fraction),
        r.stealthy_len.to_string(),
        num(r.delta),
        opt(m.map(|m| m.v_target.to_string())),
        opt(m.map(|m| m.v_stealth.to_string())),
        opt(m.map(|m| num(m.j1))),
        opt(m.map(|m| num(m.j2))),
        opt(m.map(|m| num(m.j3))),
        opt(m.map(|m| num(m.j))),
        opt(r.achieved.map(|a| a.to_string())),
        opt(c.map(|c| c.collided.to_string())),
        opt(c.and_then(|c| c.step).map(|s| s.to_string())),
        opt(c.map(|c| num(c.min_gap))),
        opt(c.map(|c| num(c.penetration))),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(sweep_record(r)).map_err(|e| io_err(path, e))?;
    }
    finish(w, path)
}

/// JSON numbers cannot be infinite; write those as strings.
pub fn json_f64(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::json!(num(x))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fcw_redteam_core::scenario::{synthesize_trace, ScenarioSpec};

    #[test]
    fn trace_round_trip_keeps_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ScenarioSpec {
            dropout: 0.3,
            steps: 40,
            ..ScenarioSpec::mio_minus_10()
        };
        let t = synthesize_trace(&spec).unwrap();
        assert!(t.frames.iter().any(|f| !f.is_complete()));
        let p = dir.path().join("trace.csv");
        write_trace(&p, &t.frames, &t.truth).unwrap();
        let back = read_trace(&p).unwrap();
        assert_eq!(back.len(), t.frames.len());
        for (a, b) in back.iter().zip(&t.frames) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,v_d1,v_v1,v_d2,v_v2,r_d1,r_v1,r_d2,r_v2,gt_d1,gt_v1\n"));
        assert!(text.contains("NaN"));

        let q = dir.path().join("truth.csv");
        write_truth(&q, &t.truth).unwrap();
        assert_eq!(read_truth(&q).unwrap(), t.truth);
    }

    #[test]
    fn malformed_trace_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_trace(&p), Err(CliError::Usage(_))));
        std::fs::write(&p, format!("{}\n1,x,0,0,0,0,0,0,0,0,0\n", TRACE_HEADER.join(","))).unwrap();
        assert!(matches!(read_trace(&p), Err(CliError::Usage(_))));
    }

    #[test]
    fn infinite_numbers_in_json() {
        assert_eq!(json_f64(f64::INFINITY), serde_json::json!("inf"));
        assert_eq!(json_f64(2.5), serde_json::json!(2.5));
    }
}
