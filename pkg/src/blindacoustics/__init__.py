"""Indoor-to-outdoor noise propagation from photography blinds with the acoustic diffusion model."""
from .acoustics import (OCTAVE_BANDS, AirProperties, Material, MaterialDatabase, SourceSpec,
                        band_sum_db, default_materials, material_lookup,
                        source_power_from_spl1m, spl_from_energy_density,
                        transmission_coefficient)
from .kernels import BACKEND
from .scene import SCENARIO_IDS, AxisBox, BlindSpec, Opening, ReceiverLine, SceneSpec, build_scenario
from .solver import SolveOptions, energy_balance, simulate, solve_all_bands
from .voxel import subdomain_stats, voxelize

__version__ = "0.1.0"
