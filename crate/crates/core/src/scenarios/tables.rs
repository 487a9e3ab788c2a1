//! Reference parameter tables for the phantom and flow studies.

use crate::error::{Error, Result};
use crate::physics::TissueParams;
use crate::units;

/// Doped water tubes: `(label, T1 ms, T2 ms)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeTable {
    pub rows: Vec<(String, f64, f64)>,
}

impl TubeTable {
    pub fn phantom() -> Self {
        let rows = [("3", 296.0, 113.0), ("4", 463.0, 53.0), ("7", 604.0, 95.0), ("10", 745.0, 157.0)]
            .into_iter()
            .chain([("14", 1034.0, 167.0), ("16", 1276.0, 204.0), ("water", 2700.0, 2100.0)])
            .map(|(l, t1, t2)| (l.to_string(), t1, t2))
            .collect();
        Self { rows }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, t1, t2) in &self.rows {
            if !(t1 >= t2 && *t2 > 0.0) {
                return Err(Error::invalid(format!("tube {label}"), "need T1 >= T2 > 0"));
            }
        }
        Ok(())
    }

    pub fn tissue(&self, label: &str) -> Option<TissueParams<f64>> {
        self.rows
            .iter()
            .find(|r| r.0 == label)
            .and_then(|&(_, t1, t2)| TissueParams::new(units::ms(t1), units::ms(t2), 1.0).ok())
    }
}

/// One pump operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpRow {
    pub voltage: f64,
    pub mean_mm_per_s: f64,
    pub std_mm_per_s: f64,
    pub reynolds: f64,
}

/// Pump operating points with the kinematic viscosity used for `Re`.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpTable {
    pub rows: Vec<PumpRow>,
    /// Kinematic viscosity, cm²/s.
    pub viscosity_cm2_per_s: f64,
}

/// Relative spread of the recovered diameters that is still accepted.
pub const DIAMETER_TOLERANCE: f64 = 0.02;

impl PumpTable {
    pub fn flow_pump() -> Self {
        let row =
            |voltage, mean_mm_per_s, std_mm_per_s, reynolds| PumpRow { voltage, mean_mm_per_s, std_mm_per_s, reynolds };
        Self {
            rows: vec![
                row(6.0, 49.19, 2.26, 2217.0),
                row(5.0, 38.71, 1.97, 1744.0),
                row(4.0, 28.84, 1.47, 1300.0),
                row(3.0, 18.52, 1.04, 834.0),
            ],
            viscosity_cm2_per_s: 1.1092e-2,
        }
    }

    /// Diameter `d = Re ν / u` implied by each row, in mm.
    pub fn diameters_mm(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.reynolds * self.viscosity_cm2_per_s / (r.mean_mm_per_s / 10.0) * 10.0).collect()
    }

    /// Diameter recovered from the first row; errors when another row
    /// disagrees by more than [`DIAMETER_TOLERANCE`].
    pub fn diameter_mm(&self) -> Result<f64> {
        let d = self.diameters_mm();
        let first = *d.first().ok_or_else(|| Error::invalid("pump table", "no rows"))?;
        for (row, &di) in self.rows.iter().zip(&d) {
            if ((di - first) / first).abs() > DIAMETER_TOLERANCE {
                return Err(Error::invalid(
                    format!("pump row {} V", row.voltage),
                    format!("diameter {di:.3} mm disagrees with {first:.3} mm"),
                ));
            }
        }
        Ok(first)
    }

    /// Mean velocities in ascending order, mm/s.
    pub fn velocities_mm_per_s(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rows.iter().map(|r| r.mean_mm_per_s).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tubes_are_valid() {
        let t = TubeTable::phantom();
        assert_eq!(t.rows.len(), 7);
        t.validate().unwrap();
        assert_eq!(t.tissue("water").unwrap().t2(), 2.1);
        assert!(t.tissue("nope").is_none());
    }

    #[test]
    fn pump_diameter_is_consistent() {
        let p = PumpTable::flow_pump();
        let d = p.diameter_mm().unwrap();
        // Re = u d / nu with row 1: 2217 * 1.1092e-2 cm^2/s / 4.919 cm/s
        assert!((d - 2217.0 * 1.1092e-2 / 4.919 * 10.0).abs() < 1e-12);
        assert!((d - 50.0).abs() < 0.1, "{d}");
        assert_eq!(p.velocities_mm_per_s(), vec![18.52, 28.84, 38.71, 49.19]);
        let mut bad = p.clone();
        bad.rows[2].reynolds *= 1.05;
        assert!(bad.diameter_mm().is_err());
    }
}
