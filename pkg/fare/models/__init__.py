from .encoder import EncoderConfig
from .interface import NavModel
