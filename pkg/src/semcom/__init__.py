"""semcom: a desk-scale semantic communication laboratory.

A learned joint semantic-channel text transceiver (Transformer encoder /
decoder around dense channel codecs), differentiable channel models,
a neural mutual-information lower-bound estimator, classical
Huffman / Reed-Solomon / 64-QAM baselines, and BLEU / sentence-similarity
metrics, all on a small numpy autodiff core.
"""

__version__ = "0.1.0"
