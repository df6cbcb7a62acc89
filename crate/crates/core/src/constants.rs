/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Free-space wave impedance (ohm).
pub const ETA0: f64 = MU0 * C0;
