//! CSV serialization of Monte Carlo records and summaries.

use std::io::Write;
use std::path::Path;

use crate::error::{Result, SemError};
use crate::fit::Criterion;
use crate::mc::{Record, SummaryRow};

/// `%.12g`-style rendering; non-finite values become `NA`.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..12).contains(&exp) {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "NA".into())
}

fn fmt_flag(x: Option<bool>) -> String {
    match x {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => "NA".into(),
    }
}

fn fmt_bool(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

pub const RECORD_HEADER: [&str; 28] = [
    "condition_id", "position", "dgp_kind", "assumed_kind", "estimator", "rep", "seed", "admissible",
    "reason_codes", "beta1_std", "beta2_std", "beta3_std", "F_min", "T", "df", "p_value", "srmr", "cfi",
    "rmsea", "cr_min", "ave_min", "flag_chisq", "flag_srmr", "flag_cfi", "flag_rmsea", "flag_cr",
    "flag_ave", "sample_hash",
];

pub fn record_row(r: &Record) -> Vec<String> {
    let f = &r.fit;
    let mut row = vec![
        r.condition_id.to_string(),
        r.cell.position.to_string(),
        r.dgp_kind.to_string(),
        r.assumed_kind.to_string(),
        r.estimator.to_string(),
        r.rep.to_string(),
        r.seed.to_string(),
        fmt_bool(r.admissible),
        r.reason_codes(),
        fmt_num(r.betas[0]),
        fmt_num(r.betas[1]),
        fmt_num(r.betas[2]),
        fmt_num(r.f_min),
        fmt_opt(f.t),
        f.df.to_string(),
        fmt_opt(f.p_value),
        fmt_opt(f.srmr),
        fmt_opt(f.cfi),
        fmt_opt(f.rmsea),
        fmt_opt(f.cr_min()),
        fmt_opt(f.ave_min()),
    ];
    row.extend(Criterion::ALL.iter().map(|&c| fmt_flag(f.flag(c))));
    row.push(r.sample_hash.clone());
    row
}

fn cell_cols(s: &SummaryRow) -> Vec<String> {
    vec![
        s.key.condition_id.to_string(),
        s.cell.position.to_string(),
        s.cell.n.to_string(),
        s.cell.k.to_string(),
        fmt_num(s.cell.sigma),
        if s.cell.homogeneous { "homogeneous" } else { "heterogeneous" }.into(),
        s.key.dgp_kind.to_string(),
        s.key.assumed_kind.to_string(),
        s.key.estimator.to_string(),
    ]
}

const CELL_HEADER: [&str; 9] =
    ["condition_id", "position", "n", "K", "sigma", "correlation", "dgp_kind", "assumed_kind", "estimator"];

pub fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = CELL_HEADER.iter().map(|s| s.to_string()).collect();
    for s in [
        "path", "theta0", "mean", "bias", "variance", "mse", "n_admissible", "n_attempts",
        "inadmissibility_pct", "truncated", "estimable",
    ] {
        h.push(s.into());
    }
    h.extend(Criterion::ALL.iter().map(|c| format!("flag_rate_{}", c.as_str())));
    h
}

pub fn summary_row(s: &SummaryRow) -> Vec<String> {
    let mut row = cell_cols(s);
    row.extend([
        format!("beta{}", s.path),
        fmt_num(s.theta0),
        fmt_num(s.mean),
        fmt_num(s.bias),
        fmt_num(s.variance),
        fmt_num(s.mse),
        s.n_admissible.to_string(),
        s.n_attempts.to_string(),
        fmt_num(s.inadmissibility_pct),
        fmt_bool(s.truncated),
        fmt_bool(s.estimable),
    ]);
    row.extend(Criterion::ALL.iter().map(|c| fmt_num(s.flag_rates[c])));
    row
}

fn write_csv<W: Write>(w: W, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| SemError::Io(e.to_string());
    wtr.write_record(header).map_err(io)?;
    for r in rows {
        wtr.write_record(&r).map_err(io)?;
    }
    wtr.flush().map_err(|e| SemError::Io(e.to_string()))
}

pub fn write_records<W: Write>(w: W, records: &[Record]) -> Result<()> {
    let header: Vec<String> = RECORD_HEADER.iter().map(|s| s.to_string()).collect();
    write_csv(w, &header, records.iter().map(record_row))
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    write_csv(w, &summary_header(), rows.iter().map(summary_row))
}

pub fn write_plot_bias<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut h: Vec<String> = CELL_HEADER.iter().map(|s| s.to_string()).collect();
    h.extend(["path", "squared_bias", "variance", "mse", "bias"].map(String::from));
    write_csv(
        w,
        &h,
        rows.iter().map(|s| {
            let mut r = cell_cols(s);
            r.extend([format!("beta{}", s.path), fmt_num(s.bias * s.bias), fmt_num(s.variance), fmt_num(s.mse), fmt_num(s.bias)]);
            r
        }),
    )
}

pub fn write_plot_inadmissible<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut h: Vec<String> = CELL_HEADER.iter().map(|s| s.to_string()).collect();
    h.extend(["n_attempts", "n_admissible", "inadmissibility_pct", "truncated"].map(String::from));
    write_csv(
        w,
        &h,
        rows.iter().filter(|s| s.path == 1).map(|s| {
            let mut r = cell_cols(s);
            r.extend([s.n_attempts.to_string(), s.n_admissible.to_string(), fmt_num(s.inadmissibility_pct), fmt_bool(s.truncated)]);
            r
        }),
    )
}

pub fn write_plot_flags<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut h: Vec<String> = CELL_HEADER.iter().map(|s| s.to_string()).collect();
    h.extend(["criterion", "flag_rate"].map(String::from));
    write_csv(
        w,
        &h,
        rows.iter().filter(|s| s.path == 1).flat_map(|s| {
            Criterion::ALL.iter().map(move |c| {
                let mut r = cell_cols(s);
                r.extend([c.as_str().to_string(), fmt_num(s.flag_rates[c])]);
                r
            })
        }),
    )
}

/// Writes records.csv, summary.csv and the three plotdata files into `dir`.
pub fn write_all(dir: &Path, records: &[Record], summary: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SemError::Io(e.to_string()))?;
    let open = |name: &str| std::fs::File::create(dir.join(name)).map_err(|e| SemError::Io(e.to_string()));
    write_records(open("records.csv")?, records)?;
    write_summary(open("summary.csv")?, summary)?;
    write_plot_bias(open("plotdata_bias.csv")?, summary)?;
    write_plot_inadmissible(open("plotdata_inadmissible.csv")?, summary)?;
    write_plot_flags(open("plotdata_flags.csv")?, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.4), "0.4");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_num(123456789012345.0), "1.23456789012e+14");
        assert_eq!(fmt_num(1000.0), "1000");
        assert_eq!(fmt_num(f64::NAN), "NA");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(0.00012345), "0.00012345");
        assert_eq!(fmt_num(9.9999999999999e11), "1e+12");
    }
}
