//! The run CSV: fixed header, one row per recorded time.

use std::path::Path;

use viscobeam::simulate::Record;

use crate::commands::Failure;

pub const HEADER: [&str; 10] =
    ["t", "E_total", "E_kin_phi", "E_kin_psi", "E_bend", "E_shear", "E_mem", "diss_residual", "q", "envelope_bound"];

/// `q` and the bound are empty without an envelope.
pub fn row(r: &Record<f64>, envelope: Option<(f64, f64)>) -> Vec<String> {
    let e = &r.energy;
    let mut row: Vec<String> = [r.t, e.total(), e.e_kin_phi, e.e_kin_psi, e.e_bend, e.e_shear, e.e_mem, e.diss_residual]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect();
    match envelope {
        Some((q, b)) => row.extend([format!("{q:e}"), format!("{b:e}")]),
        None => row.extend([String::new(), String::new()]),
    }
    row
}

/// `(t, E_total)` columns of a run CSV.
pub fn read_energy(path: &Path) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let io = |e: &dyn std::fmt::Display| Failure::Io(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io(&e))?;
    let headers = rdr.headers().map_err(|e| io(&e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| io(&format!("missing column {name}")))
    };
    let (ti, ei) = (col("t")?, col("E_total")?);
    let (mut t, mut e) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io(&e))?;
        let num = |j: usize| -> Result<f64, Failure> {
            rec.get(j)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| io(&format!("row {}: non-numeric field", i + 2)))
        };
        t.push(num(ti)?);
        e.push(num(ei)?);
    }
    Ok((t, e))
}
