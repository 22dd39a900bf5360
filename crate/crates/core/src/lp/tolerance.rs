//! Numerical tolerances shared by the simplex solver and the vertex oracle.

/// Absolute residual allowed on each constraint row of a reported optimum.
pub const FEASIBILITY: f64 = 1e-7;

/// Smallest magnitude accepted as a pivot element.
pub const PIVOT: f64 = 1e-9;

/// Reduced costs above `-OPTIMALITY` are treated as non-negative.
pub const OPTIMALITY: f64 = 1e-9;

/// Any tableau entry beyond this magnitude after a pivot aborts the solve.
pub const BLOW_UP: f64 = 1e12;

/// Consecutive degenerate pivots before pricing switches to Bland's rule.
pub const DEGENERATE_STREAK: usize = 50;
