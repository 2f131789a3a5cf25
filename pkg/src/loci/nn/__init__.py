"""Learnable sub-networks."""
from loci.nn.layers import Conv2d, ConvTranspose2d, LayerNorm, Linear, MultiHeadAttention
from loci.nn.networks import Arch, Decoder, Encoder, GatedCell, Transition
from loci.nn.params import ParamStore
