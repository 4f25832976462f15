"""Short-code person re-identification retrieval with sub-space quantization"""


__version__ = '0.1'
