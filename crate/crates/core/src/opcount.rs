//! Thread-local tally of element-level work done by the scoring kernels.
//!
//! Kernels report how many elements each pass touches; tests read the tally
//! to check that scoring stays one-pass-per-scale (linear in N at fixed d)
//! instead of silently degrading to per-window or per-block rescans.

use std::cell::Cell;

thread_local! {
    static TALLY: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub fn record(elements: u64) {
    TALLY.with(|t| t.set(t.get().wrapping_add(elements)));
}

/// Reads and clears the calling thread's tally.
pub fn take() -> u64 {
    TALLY.with(|t| t.replace(0))
}
