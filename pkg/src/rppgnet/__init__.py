"""Heart rate from facial video: feature images plus a small CNN regressor.

Modules: ``ingest`` (manifests, frames, landmarks, labels), ``roi`` (cheek
rectangle), ``featex`` (pyramid + bandpass feature images), ``cnn`` (network,
training, model files), ``metrics`` (error metrics and protocols), ``synth``
(synthetic clips with a known pulse) and ``cli``.
"""

__version__ = "0.1.0"
