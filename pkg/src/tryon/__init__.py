"""
layerfit try-on pipeline.

Occlusion-aware two-layer virtual try-on at desk scale: a linear latent
codec, the garment occlusion learner, a latent denoiser with
classifier-free guidance, layered coherence metrics and a synthetic
layered-garment dataset.
"""
