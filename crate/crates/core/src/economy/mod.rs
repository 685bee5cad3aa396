//! Structural labor-market models: the national Cobb-Douglas economy and the
//! border-town two-sector equilibrium.

mod border;
mod national;

pub use border::{native_only_wage, solve_border_town, BorderTownEquilibrium, BorderTownParams};
pub use national::{
    comparative_statics_report, implied_delta, scan_formal_low_sign, shock_multipliers,
    solve_at_labor, solve_baseline, solve_shocked, write_report_csv, ComparativeStatics,
    EconomyParams, EquilibriumState, FormalLowSignScan, ImmigrationShock, ReportRow,
    WageMultipliers, SHOCK_CONSISTENCY_TOL,
};
