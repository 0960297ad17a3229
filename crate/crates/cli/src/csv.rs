//! Plain CSV tables. Numbers use the shortest representation that reads
//! back to the same `f64`.

use std::fmt::Write;

use thinnet_core::{BandStructure, ConvergenceReport, GapReport, Spectrum, SpectrumEntry};

use crate::document::{Payload, ResultDocument, SCHEMA};

pub const SPECTRUM_HEADER: &str = "lambda,multiplicity,residual";
pub const BANDS_HEADER: &str = "type,lo,hi,multiplicity,flag";
pub const CONVERGENCE_HEADER: &str =
    "eps,h,nodes,index,limit,coarse,fine,self_convergence,deviation,relative_deviation,certified";

pub fn to_csv(doc: &ResultDocument) -> String {
    let mut s = format!("# schema={SCHEMA} kind={}\n", doc.payload.kind());
    match &doc.payload {
        Payload::Spectrum(sp) => spectrum_rows(&mut s, sp),
        Payload::Bands { structure, .. } => band_rows(&mut s, structure),
        Payload::Gaps { report, .. } => gap_rows(&mut s, report),
        Payload::Convergence(r) => convergence_rows(&mut s, r),
    }
    s
}

fn spectrum_rows(s: &mut String, sp: &Spectrum) {
    s.push_str(SPECTRUM_HEADER);
    s.push('\n');
    for e in &sp.entries {
        writeln!(s, "{:?},{},{:?}", e.lambda, e.multiplicity, e.residual).unwrap();
    }
}

fn band_rows(s: &mut String, b: &BandStructure) {
    s.push_str(BANDS_HEADER);
    s.push('\n');
    for &(lo, hi) in &b.bands {
        writeln!(s, "band,{lo:?},{hi:?},,").unwrap();
    }
    for f in &b.flat_bands {
        writeln!(s, "flat,{:?},{:?},{},{}", f.lambda, f.lambda, f.multiplicity, if f.isolated { "isolated" } else { "" })
            .unwrap();
    }
    gap_rows_body(s, &b.gaps, &b.spectral_gaps, &b.touching);
}

fn gap_rows(s: &mut String, r: &GapReport) {
    s.push_str(BANDS_HEADER);
    s.push('\n');
    gap_rows_body(s, &r.gaps, &r.spectral_gaps, &r.touching);
}

fn gap_rows_body(s: &mut String, gaps: &[thinnet_core::Gap], spectral: &[thinnet_core::Gap], touching: &[f64]) {
    for g in gaps {
        writeln!(s, "gap,{:?},{:?},,{}", g.lo, g.hi, if g.contains_flat { "contains_flat" } else { "" }).unwrap();
    }
    for g in spectral {
        writeln!(s, "spectral_gap,{:?},{:?},,", g.lo, g.hi).unwrap();
    }
    for t in touching {
        writeln!(s, "touching,{t:?},{t:?},,").unwrap();
    }
}

fn convergence_rows(s: &mut String, r: &ConvergenceReport) {
    s.push_str(CONVERGENCE_HEADER);
    s.push('\n');
    for row in &r.rows {
        for i in 0..row.fine.len() {
            writeln!(
                s,
                "{:?},{:?},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                row.eps,
                row.h,
                row.nodes,
                i + 1,
                r.limit[i],
                row.coarse[i],
                row.fine[i],
                row.self_convergence[i],
                row.deviation[i],
                row.relative_deviation[i],
                row.certified[i]
            )
            .unwrap();
        }
    }
}

/// Reads a spectrum table written by [`to_csv`]. The cutoff is not part of
/// the table and has to be supplied.
pub fn parse_spectrum_csv(text: &str, cutoff: f64) -> Result<Spectrum, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or("empty table")?;
    let header = if first.starts_with('#') {
        if !first.contains(&format!("schema={SCHEMA}")) || !first.contains("kind=spectrum") {
            return Err(format!("unexpected preamble `{first}`"));
        }
        lines.next().ok_or("missing header")?
    } else {
        first
    };
    if header.trim() != SPECTRUM_HEADER {
        return Err(format!("unexpected header `{header}`"));
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(format!("row {}: expected 3 columns", i + 1));
        }
        let bad = |c: &str| format!("row {}: bad value `{c}`", i + 1);
        entries.push(SpectrumEntry {
            lambda: cols[0].parse().map_err(|_| bad(cols[0]))?,
            multiplicity: cols[1].parse().map_err(|_| bad(cols[1]))?,
            residual: cols[2].parse().map_err(|_| bad(cols[2]))?,
        });
    }
    Ok(Spectrum { entries, cutoff })
}
