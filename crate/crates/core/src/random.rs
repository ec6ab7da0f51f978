//! Seeded random streams and the noise-source abstraction used by every sampler.
//!
//! Samplers never touch a generator directly; they pull standard normals from a
//! [`NoiseSource`]. Wrapping a stream in [`Recorder`] captures the draws, and
//! [`Replay`] feeds them back, so any trajectory can be reproduced bit-for-bit
//! from its recorded noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The generator behind every stochastic operation.
pub type RandomStream = ChaCha8Rng;

/// Independent stream `index` derived from a master seed.
///
/// Streams with different indices never overlap, so replicas can run in any
/// order or on any thread and still produce identical output.
pub fn stream(seed: u64, index: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Source of i.i.d. standard normal variates.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;

    fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

impl NoiseSource for RandomStream {
    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn standard_normal(&mut self) -> f64 {
        (**self).standard_normal()
    }
}

/// Passes draws through from an inner source and keeps a copy of each.
pub struct Recorder<N> {
    inner: N,
    log: Vec<f64>,
}

impl<N: NoiseSource> Recorder<N> {
    pub fn new(inner: N) -> Self {
        Self { inner, log: Vec::new() }
    }

    /// Draws recorded since the last call, clearing the log.
    pub fn take(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.log)
    }
}

impl<N: NoiseSource> NoiseSource for Recorder<N> {
    fn standard_normal(&mut self) -> f64 {
        let v = self.inner.standard_normal();
        self.log.push(v);
        v
    }
}

/// Feeds back a recorded sequence of draws.
///
/// Panics when asked for more values than were recorded: a replay that runs
/// past its record means the replayed computation diverged from the original.
pub struct Replay<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> Replay<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl NoiseSource for Replay<'_> {
    fn standard_normal(&mut self) -> f64 {
        let v = *self
            .data
            .get(self.pos)
            .expect("replay exhausted: recorded noise does not match the computation");
        self.pos += 1;
        v
    }
}
