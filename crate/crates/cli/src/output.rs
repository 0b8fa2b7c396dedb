//! CSV writers. Floating point numbers are written with 17 significant
//! digits so that values survive a round trip through text exactly.

use std::fmt::Write as _;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub experiment_id: String,
    pub sweep_value: Option<f64>,
    pub k: usize,
    pub n: usize,
    /// Missing in telemetry-only runs.
    pub error: Option<f64>,
    pub rank: usize,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("experiment_id,sweep_value,k,n,error,rank\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.experiment_id,
            r.sweep_value.map(num).unwrap_or_default(),
            r.k,
            r.n,
            r.error.map(num).unwrap_or_default(),
            r.rank
        );
    }
    out
}

/// Singular values per snapshot time.
pub fn spectra_csv(snapshots: &[(f64, Vec<f64>)]) -> String {
    let mut out = String::from("time,index,sigma\n");
    for (t, sigma) in snapshots {
        for (i, s) in sigma.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", num(*t), i + 1, num(*s));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub kind: &'static str,
    pub n: usize,
    pub k: usize,
    pub value: f64,
}

pub fn bounds_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("kind,n,k,value\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.kind, r.n, r.k, num(r.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-17] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn convergence_layout() {
        let rows = [ConvergenceRow {
            experiment_id: "lyapunov".into(),
            sweep_value: None,
            k: 0,
            n: 3,
            error: Some(0.5),
            rank: 24,
        }];
        assert_eq!(
            convergence_csv(&rows),
            "experiment_id,sweep_value,k,n,error,rank\nlyapunov,,0,3,5.0000000000000000e-1,24\n"
        );
    }
}
