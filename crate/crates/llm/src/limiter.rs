//! Counting semaphore that caps in-flight requests and remembers the peak.

use std::sync::{Condvar, Mutex};

#[derive(Debug)]
pub struct ConcurrencyLimiter {
    max: usize,
    state: Mutex<State>,
    freed: Condvar,
}

#[derive(Debug, Default)]
struct State {
    in_flight: usize,
    peak: usize,
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(max: usize) -> Self {
        ConcurrencyLimiter { max: max.max(1), state: Mutex::new(State::default()), freed: Condvar::new() }
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("limiter lock");
        while st.in_flight >= self.max {
            st = self.freed.wait(st).expect("limiter lock");
        }
        st.in_flight += 1;
        st.peak = st.peak.max(st.in_flight);
        Permit { limiter: self }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter lock").in_flight
    }

    /// Largest number of simultaneously held permits so far.
    pub fn peak(&self) -> usize {
        self.state.lock().expect("limiter lock").peak
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().expect("limiter lock");
        st.in_flight -= 1;
        drop(st);
        self.limiter.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn never_exceeds_cap() {
        let lim = ConcurrencyLimiter::new(3);
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| {
                    let _p = lim.acquire();
                    assert!(lim.in_flight() <= 3);
                    std::thread::sleep(Duration::from_millis(5));
                });
            }
        });
        assert_eq!(lim.in_flight(), 0);
        assert!(lim.peak() <= 3 && lim.peak() >= 1);
    }
}
