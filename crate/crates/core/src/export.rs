//! CSV serialization of the analysis artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! re-parsed file reproduces the original values bit for bit. Skipped
//! scan points keep their sweep value and leave every other field empty.

use std::io::{self, Write};

use crate::criteria::{ScanPoint, SweepVariable};
use crate::sde::EnsembleMoments;
use crate::spectra::{SpectralResult, QUADRATURE_ORDER};
use crate::stability::StabilityMapPoint;

pub use crate::sde::moments_csv_order;

/// `chi2, epsilon, class, min_real_part` per grid cell.
pub fn write_stability_map_csv<W: Write>(w: &mut W, map: &[StabilityMapPoint]) -> io::Result<()> {
    writeln!(w, "chi2,epsilon,class,min_real_part")?;
    for cell in map {
        writeln!(w, "{},{},{},{}", cell.chi2, cell.epsilon, cell.class.as_str(), cell.min_real_part)?;
    }
    Ok(())
}

/// Header names of the 21 unique signal-quadrature output (co)variances,
/// upper triangle of the `(X1, Y1, X2, Y2, X3, Y3)` block in row-major
/// order.
pub fn spectrum_csv_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(21);
    for i in 0..6 {
        for j in i..6 {
            cols.push(format!("S_{}_{}", QUADRATURE_ORDER[i], QUADRATURE_ORDER[j]));
        }
    }
    cols
}

/// `omega` plus the 21 unique signal-quadrature output (co)variances.
pub fn write_spectrum_csv<W: Write>(w: &mut W, spec: &SpectralResult) -> io::Result<()> {
    writeln!(w, "omega,{}", spectrum_csv_columns().join(","))?;
    for (omega, quad) in spec.omega.iter().zip(&spec.quad_out) {
        write!(w, "{omega}")?;
        for i in 0..6 {
            for j in i..6 {
                write!(w, ",{}", quad[(i, j)])?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Scan CSV: sweep value, six witness minima, six argmin frequencies, the
/// pairwise gains at their minima, and a skip marker for points at or
/// above threshold.
pub fn write_criteria_scan_csv<W: Write>(
    w: &mut W,
    scan: &[ScanPoint],
    sweep: SweepVariable,
) -> io::Result<()> {
    let value_col = match sweep {
        SweepVariable::Pump => "epsilon",
        SweepVariable::Chi2 => "chi2",
    };
    writeln!(
        w,
        "{value_col},skipped,s12_min,s13_min,s23_min,s123_min,s312_min,s231_min,\
         s12_argmin_omega,s13_argmin_omega,s23_argmin_omega,s123_argmin_omega,\
         s312_argmin_omega,s231_argmin_omega,g3_at_s12_min,g2_at_s13_min,g1_at_s23_min"
    )?;
    for point in scan {
        match &point.minima {
            Some(m) => {
                write!(w, "{},0", point.value)?;
                for v in m.min {
                    write!(w, ",{v}")?;
                }
                for v in m.argmin_omega {
                    write!(w, ",{v}")?;
                }
                for v in m.gains_at_min {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
            None => {
                writeln!(w, "{},1{}", point.value, ",".repeat(15))?;
            }
        }
    }
    Ok(())
}

/// Per-frequency witness CSV used for spectra of the six criteria.
pub fn write_criteria_spectrum_csv<W: Write>(
    w: &mut W,
    spec: &crate::criteria::CriteriaSpectrum,
) -> io::Result<()> {
    writeln!(w, "omega,s12,s13,s23,s123,s312,s231,g1,g2,g3")?;
    for i in 0..spec.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            spec.omega[i],
            spec.s12[i],
            spec.s13[i],
            spec.s23[i],
            spec.s123[i],
            spec.s312[i],
            spec.s231[i],
            spec.gains[i].g1,
            spec.gains[i].g2,
            spec.gains[i].g3,
        )?;
    }
    Ok(())
}

/// Time-resolved moments CSV: time, complex means, photon numbers,
/// quadrature (co)variances, triple witnesses and the divergence count.
pub fn write_moments_csv<W: Write>(w: &mut W, moments: &EnsembleMoments) -> io::Result<()> {
    writeln!(w, "{}", moments_csv_order().join(","))?;
    for (t, r) in moments.times.iter().zip(&moments.records) {
        write!(w, "{t}")?;
        for m in 0..4 {
            write!(w, ",{},{}", r.mean_amp[m].re, r.mean_amp[m].im)?;
        }
        for m in 0..4 {
            write!(w, ",{}", r.intensity[m])?;
        }
        for v in r.quad_cov {
            write!(w, ",{v}")?;
        }
        for v in r.vijk {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", moments.n_divergent)?;
    }
    Ok(())
}
