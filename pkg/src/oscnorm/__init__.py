"""Oscillation norms over weighted grids and finite quasi-metric spaces."""

from .gauge import (
    EventuallyConcaveGauge,
    Gauge,
    GaugeError,
    GaugeProbe,
    GaugeValidation,
    IdentityGauge,
    LogOnePlusGauge,
    PolygonalGauge,
    PowerGauge,
    concave_minorant,
    gauge_from_spec,
    validate_gauge,
)
from .grid import (
    CellMeasure,
    DyadicCube,
    GridDomain,
    GridError,
    GridFunction,
    MuDyadicTree,
    RealBox,
    RealInterval,
    Rect,
    build_mu_dyadic_tree,
    integrate,
    mu_dyadic_split,
    region_arrays,
    region_mass,
)
from .oscillation import (
    NormReport,
    OscError,
    RegionFamily,
    k_phi,
    luxemburg_norm,
    norm_sup,
    osc_gauge_infc,
    osc_l1,
)

__version__ = "0.1.0"
