//! Clipped-surrogate policy gradient (in progress).
