//! CSV and JSON writers for planned trajectories and cost traces.

use crate::planner::{FeasibilityReport, OuterRecord, PlanResult, TrajectorySample, TransitionInstant};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Formats `v` with 9 significant digits, dropping trailing zeros.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let fixed = format!("{:.*}", (8 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to the value printed by [`fmt_sig`].
pub fn round_sig(v: f64) -> f64 {
    fmt_sig(v).parse().unwrap_or(v)
}

/// Flat record written per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub mode: String,
    pub position: [f64; 3],
    /// (w, x, y, z)
    pub orientation: [f64; 4],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
    pub control: Vec<f64>,
}

impl SampleRecord {
    pub fn from_sample(s: &TrajectorySample) -> Self {
        let q = s.pose.orientation.quaternion();
        let r = round_sig;
        Self {
            t: r(s.t),
            mode: s.mode.clone(),
            position: s.pose.position.map(r).into(),
            orientation: [r(q.w), r(q.i), r(q.j), r(q.k)],
            velocity: s.velocity.map(r).into(),
            acceleration: s.acceleration.map(r).into(),
            control: s.control.iter().copied().map(r).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub mode_sequence: Vec<String>,
    pub transitions: Vec<TransitionInstant>,
    pub total_time: f64,
    pub final_cost: f64,
    pub feasibility: FeasibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub metadata: TrajectoryMetadata,
    pub samples: Vec<SampleRecord>,
}

impl TrajectoryDocument {
    pub fn from_result(result: &PlanResult) -> Self {
        Self {
            metadata: TrajectoryMetadata {
                mode_sequence: result.mode_sequence.clone(),
                transitions: result
                    .transitions
                    .iter()
                    .map(|t| TransitionInstant {
                        t: round_sig(t.t),
                        ..t.clone()
                    })
                    .collect(),
                total_time: round_sig(result.total_time),
                final_cost: round_sig(result.final_cost),
                feasibility: result.feasibility.clone(),
            },
            samples: result.samples.iter().map(SampleRecord::from_sample).collect(),
        }
    }
}

/// Writes one row per sample; control columns are padded with empty
/// cells up to the widest control vector.
pub fn write_csv<W: Write>(samples: &[TrajectorySample], mut w: W) -> io::Result<()> {
    let width = samples.iter().map(|s| s.control.len()).max().unwrap_or(0);
    let mut header = vec![
        "t", "mode", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "ax", "ay", "az",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend((0..width).map(|k| format!("u{k}")));
    writeln!(w, "{}", header.join(","))?;
    for s in samples {
        let rec = SampleRecord::from_sample(s);
        let mut row = vec![fmt_sig(rec.t), rec.mode.clone()];
        row.extend(
            rec.position
                .iter()
                .chain(&rec.orientation)
                .chain(&rec.velocity)
                .chain(&rec.acceleration)
                .map(|&v| fmt_sig(v)),
        );
        row.extend((0..width).map(|k| rec.control.get(k).map(|&v| fmt_sig(v)).unwrap_or_default()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_json<W: Write>(result: &PlanResult, w: W) -> io::Result<()> {
    serde_json::to_writer_pretty(w, &TrajectoryDocument::from_result(result)).map_err(io::Error::other)
}

/// One row per outer iteration.
pub fn write_trace_csv<W: Write>(trace: &[OuterRecord], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "iteration,cost_before,cost_after,accepted_steps,rejected_steps,segments,poses,duration"
    )?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            fmt_sig(r.cost_before),
            fmt_sig(r.cost_after),
            r.accepted_steps,
            r.rejected_steps,
            r.segments,
            r.poses,
            fmt_sig(r.duration)
        )?;
    }
    Ok(())
}

/// Every accepted LM step cost, tagged with its outer iteration.
pub fn write_step_costs_csv<W: Write>(costs: &[Vec<f64>], mut w: W) -> io::Result<()> {
    writeln!(w, "iteration,step,cost")?;
    for (i, list) in costs.iter().enumerate() {
        for (k, c) in list.iter().enumerate() {
            writeln!(w, "{i},{k},{}", fmt_sig(*c))?;
        }
    }
    Ok(())
}
