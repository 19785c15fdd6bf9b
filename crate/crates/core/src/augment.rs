//! Temporal augmentations of clips.
//!
//! Both keep the power spectrum of any signal embedded in the frames: a
//! circular shift only changes phase, and reversal conjugates the spectrum.

use rand::Rng;

use crate::model::Clip;

/// Circularly rotates the frames by `s ~ uniform{1..=shift_max}` so that
/// output frame `t` is input frame `(t + s) mod T`. Returns the shift used.
///
/// Requires `1 <= shift_max < T`; larger values are clamped to `T - 1`.
pub fn weak_augment<R: Rng + ?Sized>(clip: &Clip, shift_max: usize, rng: &mut R) -> (Clip, usize) {
    let upper = shift_max.clamp(1, clip.frames().saturating_sub(1).max(1));
    let shift = rng.random_range(1..=upper);
    (rotate_frames(clip, shift), shift)
}

/// Frame order reversed.
pub fn strong_augment(clip: &Clip) -> Clip {
    let frame = clip.frame_len();
    let mut data = alloc::vec::Vec::with_capacity(clip.data().len());
    for f in clip.data().chunks_exact(frame).rev() {
        data.extend_from_slice(f);
    }
    clip.with_data(data)
}

/// `out[t] = in[(t + shift) mod T]`.
pub fn rotate_frames(clip: &Clip, shift: usize) -> Clip {
    let mut data = clip.data().to_vec();
    let frames = clip.frames();
    data.rotate_left((shift % frames) * clip.frame_len());
    clip.with_data(data)
}
