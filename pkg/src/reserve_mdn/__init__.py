"""Distributional loss reserving on aggregate claims triangles: mixture
density networks, a GLM-boosted variant, and a cross-classified ODP
baseline, with rolling-origin model selection, projection constraints,
ensembling and quantitative evaluation."""

__version__ = "0.1.0"

from .ccodp import (CcOdpFit, adjust_latest_accident, ccodp_density,
                    ccodp_log_density, ccodp_quantile, fit_ccodp)
from .forecast import (EnsembleModel, ReserveDistribution, fit_final,
                       forecast_table, mixture_quantile, predict_cell,
                       simulate_reserves)
from .logscale import (LogMixture, log_mixture_moments, log_mixture_pdf,
                       log_mixture_quantile, sigma_cap, to_log_mixture)
from .mdn import (ConstraintSet, DivergenceError, MdnConfig, NetworkWeights,
                  forward, init_weights, load_weights, save_weights, train,
                  training_loss)
from .metrics import (EvaluationReport, aggregate, log_score, quantile_score,
                      rmse)
from .mixture import (MixtureParams, mixture_mean, mixture_moments,
                      mixture_pdf)
from .partition import (DataSplit, adjusted_partitions, final_fit_split,
                        rolling_origin)
from .resmdn import (GlmEmbedding, boost_report, build_embedding, cell_code,
                     init_resmdn, resmdn_forward)
from .search import (TestErrorReport, argmin_tiebreak, select_hyperparameters,
                     test_error)
from .simulate import EnvironmentSpec, environment_spec, empirical_reference, generate
from .triangle import (IncrementalTriangle, Normalizer, calendar_period,
                       fit_normalizer, load_triangle, lower_triangle_cells,
                       upper_triangle_cells, write_triangle_csv)
