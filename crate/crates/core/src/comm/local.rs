//! In-process backend: `R` logical ranks on `R` threads exchanging buffers
//! through shared slots, synchronized by a barrier at every collective.

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use super::{pairwise_sum, CommError, Communicator};

struct BarrierState {
    arrived: usize,
    generation: u64,
}

// A barrier that gives up once any rank of the world has panicked, so a
// failing rank cannot leave its peers blocked forever.
struct PoisonBarrier {
    size: usize,
    state: Mutex<BarrierState>,
    cv: Condvar,
    /// Set world-wide when any rank panics.
    poison: Arc<AtomicBool>,
    /// Set when a member drops its handle to this group.
    closed: AtomicBool,
}

impl PoisonBarrier {
    fn wait(&self) -> Result<(), CommError> {
        let mut st = lock(&self.state);
        let generation = st.generation;
        st.arrived += 1;
        if st.arrived == self.size {
            st.arrived = 0;
            st.generation += 1;
            self.cv.notify_all();
            return Ok(());
        }
        while st.generation == generation {
            if self.poison.load(Ordering::SeqCst) || self.closed.load(Ordering::SeqCst) {
                return Err(CommError::Poisoned);
            }
            st = self.cv.wait_timeout(st, Duration::from_millis(20)).unwrap_or_else(|e| e.into_inner()).0;
        }
        Ok(())
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

struct Group {
    size: usize,
    barrier: PoisonBarrier,
    bytes: Vec<Mutex<Vec<u8>>>,
    recv_lens: Mutex<Vec<usize>>,
    scalars: Mutex<Vec<f64>>,
    colors: Mutex<Vec<usize>>,
    children: Mutex<Vec<Option<Arc<Group>>>>,
    poison: Arc<AtomicBool>,
}

impl Group {
    fn new(size: usize, poison: Arc<AtomicBool>) -> Arc<Group> {
        Arc::new(Group {
            size,
            barrier: PoisonBarrier {
                size,
                state: Mutex::new(BarrierState { arrived: 0, generation: 0 }),
                cv: Condvar::new(),
                poison: poison.clone(),
                closed: AtomicBool::new(false),
            },
            bytes: (0..size).map(|_| Mutex::new(Vec::new())).collect(),
            recv_lens: Mutex::new(vec![0; size]),
            scalars: Mutex::new(vec![0.0; size]),
            colors: Mutex::new(vec![0; size]),
            children: Mutex::new(vec![None; size]),
            poison,
        })
    }
}

/// Handle owned by one logical rank of an in-process world.
pub struct ThreadComm {
    rank: usize,
    group: Arc<Group>,
}

impl ThreadComm {
    /// Handles for a fresh world of `size` ranks, indexed by rank.
    pub fn world(size: usize) -> Vec<ThreadComm> {
        assert!(size > 0, "world needs at least one rank");
        let group = Group::new(size, Arc::new(AtomicBool::new(false)));
        (0..size).map(|rank| ThreadComm { rank, group: group.clone() }).collect()
    }

    fn poison(&self) {
        self.group.poison.store(true, Ordering::SeqCst);
    }

    fn gather_scalar(&self, value: f64) -> Result<Vec<f64>, CommError> {
        lock(&self.group.scalars)[self.rank] = value;
        self.group.barrier.wait()?;
        let values = lock(&self.group.scalars).clone();
        self.group.barrier.wait()?;
        Ok(values)
    }
}

impl Communicator for ThreadComm {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.group.size
    }

    fn split(&self, color: usize) -> Result<Box<dyn Communicator>, CommError> {
        let g = &self.group;
        lock(&g.colors)[self.rank] = color;
        g.barrier.wait()?;
        let members: Vec<usize> = {
            let colors = lock(&g.colors);
            (0..g.size).filter(|&r| colors[r] == color).collect()
        };
        let leader = members[0];
        if leader == self.rank {
            lock(&g.children)[self.rank] = Some(Group::new(members.len(), g.poison.clone()));
        }
        g.barrier.wait()?;
        let child = lock(&g.children)[leader].clone().expect("leader published the subgroup");
        g.barrier.wait()?;
        if leader == self.rank {
            lock(&g.children)[self.rank] = None;
        }
        let rank = members.iter().position(|&r| r == self.rank).expect("member of own color");
        Ok(Box::new(ThreadComm { rank, group: child }))
    }

    fn all_to_all_bytes(&self, send: &[u8], recv: &mut [u8]) -> Result<(), CommError> {
        let g = &self.group;
        {
            let mut slot = lock(&g.bytes[self.rank]);
            slot.clear();
            slot.extend_from_slice(send);
        }
        lock(&g.recv_lens)[self.rank] = recv.len();
        g.barrier.wait()?;

        let lens: Vec<usize> = g.bytes.iter().map(|s| lock(s).len()).collect();
        let recv_lens = lock(&g.recv_lens).clone();
        let len = lens[0];
        if lens.iter().chain(&recv_lens).any(|&l| l != len) {
            // Every rank sees the same lengths, so every rank bails out here.
            g.barrier.wait()?;
            return Err(CommError::Mismatch(format!(
                "all_to_all buffer lengths differ across ranks: send {lens:?}, receive {recv_lens:?}"
            )));
        }
        if !len.is_multiple_of(g.size) {
            g.barrier.wait()?;
            return Err(CommError::Indivisible { len, size: g.size });
        }
        let block = len / g.size;
        for (j, slot) in g.bytes.iter().enumerate() {
            let src = lock(slot);
            recv[j * block..(j + 1) * block].copy_from_slice(&src[self.rank * block..(self.rank + 1) * block]);
        }
        g.barrier.wait()
    }

    fn reduce_sum(&self, value: f64) -> Result<f64, CommError> {
        self.all_reduce_sum(value)
    }

    fn all_reduce_sum(&self, value: f64) -> Result<f64, CommError> {
        Ok(pairwise_sum(&self.gather_scalar(value)?))
    }

    fn all_reduce_max(&self, value: f64) -> Result<f64, CommError> {
        // NaN must win so that a non-finite diagnostic is seen everywhere.
        Ok(self.gather_scalar(value)?.into_iter().fold(f64::NEG_INFINITY, |m, v| {
            if v.is_nan() || m.is_nan() {
                f64::NAN
            } else {
                m.max(v)
            }
        }))
    }

    fn barrier(&self) -> Result<(), CommError> {
        self.group.barrier.wait()
    }
}

/// Runs `f` on `size` logical ranks, one thread each, and returns the
/// per-rank results in rank order. A panic on any rank poisons the world
/// and is re-raised here after all threads have stopped.
pub fn run_ranks<R, F>(size: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Box<dyn Communicator>) -> R + Sync,
{
    let comms = ThreadComm::world(size);
    let f = &f;
    let outcomes: Vec<std::thread::Result<R>> = std::thread::scope(|s| {
        let handles: Vec<_> = comms
            .into_iter()
            .map(|comm| {
                s.spawn(move || {
                    let poison = comm.group.poison.clone();
                    let res = panic::catch_unwind(AssertUnwindSafe(|| f(Box::new(comm))));
                    if res.is_err() {
                        poison.store(true, Ordering::SeqCst);
                    }
                    res
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(Err)).collect()
    });
    let mut results = Vec::with_capacity(size);
    for outcome in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(p) => panic::resume_unwind(p),
        }
    }
    results
}

// Once a rank lets go of a handle, no later collective on that group can
// complete, so peers still waiting in one are released with an error.
// Collectives a rank has already returned from are unaffected.
impl Drop for ThreadComm {
    fn drop(&mut self) {
        if std::thread::panicking() {
            self.poison();
        }
        self.group.barrier.closed.store(true, Ordering::SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rank_exchange() {
        let out = run_ranks(2, |c| {
            let send: Vec<u32> = if c.rank() == 0 { vec![10, 11] } else { vec![20, 21] };
            let mut recv = vec![0u32; 2];
            c.all_to_all(&send, &mut recv).unwrap();
            recv
        });
        assert_eq!(out, vec![vec![10, 20], vec![11, 21]]);
    }

    #[test]
    fn four_rank_exhaustive_exchange() {
        let out = run_ranks(4, |c| {
            let send: Vec<u32> = (0..4).map(|j| (c.rank() * 10 + j) as u32).collect();
            let mut recv = vec![0u32; 4];
            c.all_to_all(&send, &mut recv).unwrap();
            recv
        });
        for (i, recv) in out.iter().enumerate() {
            for (j, &v) in recv.iter().enumerate() {
                assert_eq!(v, (j * 10 + i) as u32);
            }
        }
    }

    #[test]
    fn split_groups_match_pencil_layout() {
        let out = run_ranks(4, |c| {
            let xz = c.split(c.rank() / 2).unwrap();
            let xy = c.split(c.rank() % 2).unwrap();
            // Tag payloads with world ranks to check group membership.
            let mut got = vec![0u32; xz.size()];
            xz.all_to_all(&vec![c.rank() as u32; xz.size()], &mut got).unwrap();
            let mut got2 = vec![0u32; xy.size()];
            xy.all_to_all(&vec![c.rank() as u32; xy.size()], &mut got2).unwrap();
            (xz.rank(), xy.rank(), got, got2)
        });
        assert_eq!(out[0], (0, 0, vec![0, 1], vec![0, 2]));
        assert_eq!(out[1], (1, 0, vec![0, 1], vec![1, 3]));
        assert_eq!(out[2], (0, 1, vec![2, 3], vec![0, 2]));
        assert_eq!(out[3], (1, 1, vec![2, 3], vec![1, 3]));
    }

    #[test]
    fn mismatched_lengths_error_everywhere() {
        let out = run_ranks(2, |c| {
            let n = if c.rank() == 0 { 2 } else { 4 };
            let send = vec![0u8; n];
            let mut recv = vec![0u8; n];
            c.all_to_all_bytes(&send, &mut recv)
        });
        assert!(out.iter().all(|r| matches!(r, Err(CommError::Mismatch(_)))));
    }

    #[test]
    fn reductions() {
        let out = run_ranks(4, |c| {
            let v = (c.rank() + 1) as f64;
            (c.reduce_sum(v).unwrap(), c.all_reduce_max(v).unwrap())
        });
        assert_eq!(out[0], (10.0, 4.0));
        assert!(out.iter().all(|&(_, m)| m == 4.0));
    }

    #[test]
    #[should_panic(expected = "rank 1 fails")]
    fn panic_on_one_rank_does_not_hang() {
        run_ranks(3, |c| {
            if c.rank() == 1 {
                panic!("rank 1 fails");
            }
            c.barrier()
        });
    }

    #[test]
    fn early_return_releases_peers() {
        let out = run_ranks(3, |c| {
            if c.rank() == 2 {
                return Err(CommError::Mismatch("rank 2 gave up".into()));
            }
            c.barrier()
        });
        assert!(out[2].is_err());
        assert_eq!(out[0], Err(CommError::Poisoned));
        assert_eq!(out[1], Err(CommError::Poisoned));
    }
}
