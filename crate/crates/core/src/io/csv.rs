//! Fixed-schema CSV writers. Column order is part of the public interface.

use std::fmt::Write as _;

use crate::analysis::AnalysisReport;
use crate::evaluation::{bpsk_ber, tdma_bpsk_bler, SweepResult};
use crate::models::CodeBook;
use crate::tensor::Tensor2;
use crate::training::TrainingTrace;

pub const TRACE_HEADER: &str = "epoch,loss_user1,loss_user2,mean_eb_n0_db";
pub const BLER_HEADER: &str = "model_kind,train_alpha,eval_alpha,eb_n0_db,frames,errors_u1,errors_u2,bler_u1,bler_u2,bler_tdma_analytic";
pub const BASELINE_HEADER: &str = "eb_n0_db,ber_bpsk,bler_tdma_analytic";
pub const DISTANCE_HEADER: &str = "set,rank,distance";
pub const CORRELATION_HEADER: &str = "matrix,row,col,value";
pub const CODEBOOK_HEADER_PREFIX: &str = "user,message";

pub fn trace_csv(trace: &TrainingTrace) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for (i, ((a, b), s)) in trace
        .loss_user1
        .iter()
        .zip(&trace.loss_user2)
        .zip(&trace.mean_eb_n0_db)
        .enumerate()
    {
        writeln!(out, "{i},{a},{b},{s}").unwrap();
    }
    out
}

/// One row per grid point; `k` sets the block length of the TDMA column.
pub fn bler_csv(result: &SweepResult, k: usize) -> String {
    let mut out = format!("{BLER_HEADER}\n");
    for p in &result.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            result.model_kind,
            result.train_alpha,
            p.alpha_eval,
            p.eb_n0_db,
            p.frames,
            p.errors_user1,
            p.errors_user2,
            p.bler_user1,
            p.bler_user2,
            tdma_bpsk_bler(p.eb_n0_db, k)
        )
        .unwrap();
    }
    out
}

pub fn baseline_csv(snrs_db: &[f64], k: usize) -> String {
    let mut out = format!("{BASELINE_HEADER}\n");
    for &s in snrs_db {
        writeln!(out, "{s},{},{}", bpsk_ber(s), tdma_bpsk_bler(s, k)).unwrap();
    }
    out
}

pub fn distances_csv(report: &AnalysisReport) -> String {
    let mut out = format!("{DISTANCE_HEADER}\n");
    for (name, list) in [
        ("self_user1", &report.distances.self_user1),
        ("self_user2", &report.distances.self_user2),
        ("cross", &report.distances.cross),
    ] {
        for (i, d) in list.iter().enumerate() {
            writeln!(out, "{name},{i},{d}").unwrap();
        }
    }
    out
}

pub fn correlations_csv(report: &AnalysisReport) -> String {
    let mut out = format!("{CORRELATION_HEADER}\n");
    let c = &report.correlations;
    for (name, m) in [
        ("cross", &c.cross),
        ("self_user1", &c.self_user1),
        ("self_user2", &c.self_user2),
    ] {
        write_matrix(&mut out, name, m);
    }
    out
}

fn write_matrix(out: &mut String, name: &str, m: &Tensor2) {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            writeln!(out, "{name},{i},{j},{}", m.get(i, j)).unwrap();
        }
    }
}

pub fn codebooks_csv(cb1: &CodeBook, cb2: &CodeBook) -> String {
    let mut out = String::from(CODEBOOK_HEADER_PREFIX);
    for i in 0..cb1.n() {
        write!(out, ",z{i}").unwrap();
    }
    out.push('\n');
    for (user, cb) in [(1, cb1), (2, cb2)] {
        for (m, row) in cb.matrix().iter_rows().enumerate() {
            write!(out, "{user},{m}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}
