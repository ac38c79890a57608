"""Wavelet-domain l1-l2 deblurring with sparse circulant operator approximations."""
