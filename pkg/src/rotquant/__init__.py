"""Data-oblivious vector quantization by random rotation and per-coordinate Lloyd-Max codebooks."""
from .codebook import (Codebook, SourcePdf, beta_codebook, beta_pdf, build_codebook, codebook_cost,
                       codebook_for_dimension, gaussian_codebook, load_codebook, panter_dite_bound,
                       save_codebook)
from .evaluation import (ReportConfig, distortion_report, empirical_mse, empirical_prod_error, sweep,
                         theoretical_bounds)
from .kernels import BACKEND
from .qjl import QjlCode, QjlSketch, make_sketch, qjl_dequantize, qjl_inner_estimate, qjl_quantize
from .quantizer import (MseQuantizer, ProdQuantizer, QuantizedVecMse, QuantizedVecProd, dequant_mse,
                        dequant_prod, inner_estimate_mse, inner_estimate_prod, quant_mse, quant_prod)
from .rotation import Rotation, generate_rotation, rotate, rotate_back
from .search import QuantizedIndex, build_index, exact_ground_truth, recall_eval, search
from .storage import read_fvecs, read_index, read_ivecs, write_fvecs, write_index

__version__ = "0.1.0"
