from .gradcam import encoder_kl_graph, grad_cam, heatmaps_from_graph
from .heatmap import Heatmap, bilinear_upsample, bin_sums, write_pgm
