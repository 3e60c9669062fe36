"""Finite-volume lab for viscous conservation laws with an interface-switching flux."""

__version__ = "0.1.0"

from .mollifier import (MollifierFamily, WeightSchedule, delta_eps, heaviside_eps,
                        power_schedule, reg_abs, sgn_eps, sgn_minus, sgn_plus)
from .geometry import (Box, InterfaceSurface, band_indicator, make_surface,
                       replace_component, signed_offset, validate_monotonicity)
from .flux import (FluxPair, combined_flux, flux_u_derivative, make_flux,
                   nonalignment_margin, nonalignment_report, riemann_reduce,
                   zero_trace_gap)
from .solver import (Field, Grid, SchemeConfig, SolverInstabilityError, Stepper,
                     dump_snapshot, run, run_mms, stable_dt, step)
from .diagnostics import (DiagnosticsSeries, SeriesCollector, band_mass,
                          concentration_series, concentration_weight,
                          fit_quadratic_decay, l1_norm, ledger_check,
                          positivity_violation, total_mass)
from .harness import (ConfigError, HypothesisError, RunConfig, SweepReport,
                      parse_config, run_sweep, validate_only, write_outputs)
