from .vib import LatentGaussian, kl_graph, kl_unit_gaussian, reparameterize_graph, sample_latent, squared_error_graph
