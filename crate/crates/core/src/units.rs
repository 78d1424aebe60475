//! Unit conversions into atomic units.

/// Electron masses per unified atomic mass unit.
pub const AMU_IN_ELECTRON_MASSES: f64 = 1822.888486;

/// Mass in atomic mass units to electron masses.
pub fn amu_to_au(mass_amu: f64) -> f64 {
    mass_amu * AMU_IN_ELECTRON_MASSES
}

/// Reduced mass `m1 m2 / (m1 + m2)` in atomic units from masses in amu.
pub fn reduced_mass_amu(m1: f64, m2: f64) -> f64 {
    amu_to_au(m1 * m2 / (m1 + m2))
}
