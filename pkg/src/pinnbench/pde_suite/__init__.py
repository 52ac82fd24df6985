from pinnbench.pde_suite.domain import DomainBox, sample_faces
from pinnbench.pde_suite.problems import (
    Condition,
    PDEProblem,
    PointCounts,
    ProblemParams,
    allen_cahn,
    burgers,
    get_problem,
    navier_stokes,
    poisson,
    poisson_source,
    problem_names,
    residual_allen_cahn,
    residual_burgers,
    residual_navier_stokes,
    residual_poisson,
)
from pinnbench.pde_suite.references import (
    AllenCahnReference,
    BurgersReference,
    solve_allen_cahn,
)
from pinnbench.pde_suite.taylor_green import (
    NS_BOX,
    ObservationSet,
    gen_taylor_green,
    taylor_green_values,
)

__all__ = [
    "AllenCahnReference",
    "BurgersReference",
    "Condition",
    "DomainBox",
    "NS_BOX",
    "ObservationSet",
    "PDEProblem",
    "PointCounts",
    "ProblemParams",
    "allen_cahn",
    "burgers",
    "gen_taylor_green",
    "get_problem",
    "navier_stokes",
    "poisson",
    "poisson_source",
    "problem_names",
    "residual_allen_cahn",
    "residual_burgers",
    "residual_navier_stokes",
    "residual_poisson",
    "sample_faces",
    "solve_allen_cahn",
    "taylor_green_values",
]
