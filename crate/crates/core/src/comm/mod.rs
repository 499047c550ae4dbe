//! Rank/communicator abstraction.
//!
//! Every collective is a blocking rendezvous that all members of the
//! communicator must enter with identically sized buffers.

mod local;
#[cfg(feature = "mpi")]
pub mod mpi;

pub use local::{run_ranks, ThreadComm};

use bytemuck::Pod;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommError {
    #[error("collective mismatch: {0}")]
    Mismatch(String),
    #[error("buffer of {len} elements is not divisible into {size} equal blocks")]
    Indivisible { len: usize, size: usize },
    #[error("another rank failed; communicator is poisoned")]
    Poisoned,
    #[error("message-passing runtime error code {0}")]
    Runtime(i32),
}

pub trait Communicator: Send {
    fn rank(&self) -> usize;

    fn size(&self) -> usize;

    /// Sub-communicator of all ranks passing the same `color`, ranked by
    /// parent rank.
    fn split(&self, color: usize) -> Result<Box<dyn Communicator>, CommError>;

    /// Equal-block exchange: block `j` of `recv` on rank `i` receives block
    /// `i` of `send` on rank `j`.
    fn all_to_all_bytes(&self, send: &[u8], recv: &mut [u8]) -> Result<(), CommError>;

    /// Sum of `value` over all ranks, valid on rank 0.
    fn reduce_sum(&self, value: f64) -> Result<f64, CommError>;

    fn all_reduce_sum(&self, value: f64) -> Result<f64, CommError>;

    fn all_reduce_max(&self, value: f64) -> Result<f64, CommError>;

    fn barrier(&self) -> Result<(), CommError>;
}

impl dyn Communicator + '_ {
    /// Typed all-to-all over plain-old-data elements.
    pub fn all_to_all<T: Pod>(&self, send: &[T], recv: &mut [T]) -> Result<(), CommError> {
        if !send.len().is_multiple_of(self.size()) {
            return Err(CommError::Indivisible { len: send.len(), size: self.size() });
        }
        self.all_to_all_bytes(bytemuck::cast_slice(send), bytemuck::cast_slice_mut(recv))
    }

    pub fn is_root(&self) -> bool {
        self.rank() == 0
    }
}

/// Single-rank communicator; every collective is the identity.
#[derive(Debug, Default, Clone, Copy)]
pub struct SelfComm;

impl Communicator for SelfComm {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn split(&self, _color: usize) -> Result<Box<dyn Communicator>, CommError> {
        Ok(Box::new(SelfComm))
    }

    fn all_to_all_bytes(&self, send: &[u8], recv: &mut [u8]) -> Result<(), CommError> {
        if send.len() != recv.len() {
            return Err(CommError::Mismatch(format!(
                "send has {} bytes but receive has {}",
                send.len(),
                recv.len()
            )));
        }
        recv.copy_from_slice(send);
        Ok(())
    }

    fn reduce_sum(&self, value: f64) -> Result<f64, CommError> {
        Ok(value)
    }

    fn all_reduce_sum(&self, value: f64) -> Result<f64, CommError> {
        Ok(value)
    }

    fn all_reduce_max(&self, value: f64) -> Result<f64, CommError> {
        Ok(value)
    }

    fn barrier(&self) -> Result<(), CommError> {
        Ok(())
    }
}

/// Sums in a fixed rank-ascending pairwise tree.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}
