//! Process backend over an installed Open MPI runtime.
//!
//! Only the handful of calls the solver needs are bound. The predefined
//! handles are Open MPI ABI symbols, so this module does not link against
//! other MPI implementations.

use std::ffi::{c_int, c_void};
use std::ptr;
use std::sync::atomic::{AtomicBool, Ordering};

use super::{CommError, Communicator};

#[repr(C)]
struct Opaque {
    _p: [u8; 0],
}

type RawComm = *mut Opaque;
type RawDatatype = *mut Opaque;
type RawOp = *mut Opaque;

const MPI_SUCCESS: c_int = 0;

#[link(name = "mpi")]
extern "C" {
    static mut ompi_mpi_comm_world: Opaque;
    static mut ompi_mpi_byte: Opaque;
    static mut ompi_mpi_double: Opaque;
    static mut ompi_mpi_op_sum: Opaque;
    static mut ompi_mpi_op_max: Opaque;

    fn MPI_Init(argc: *mut c_int, argv: *mut *mut *mut i8) -> c_int;
    fn MPI_Initialized(flag: *mut c_int) -> c_int;
    fn MPI_Finalize() -> c_int;
    fn MPI_Comm_rank(comm: RawComm, rank: *mut c_int) -> c_int;
    fn MPI_Comm_size(comm: RawComm, size: *mut c_int) -> c_int;
    fn MPI_Comm_split(comm: RawComm, color: c_int, key: c_int, out: *mut RawComm) -> c_int;
    fn MPI_Comm_free(comm: *mut RawComm) -> c_int;
    fn MPI_Alltoall(
        send: *const c_void,
        send_count: c_int,
        send_type: RawDatatype,
        recv: *mut c_void,
        recv_count: c_int,
        recv_type: RawDatatype,
        comm: RawComm,
    ) -> c_int;
    fn MPI_Reduce(
        send: *const c_void,
        recv: *mut c_void,
        count: c_int,
        datatype: RawDatatype,
        op: RawOp,
        root: c_int,
        comm: RawComm,
    ) -> c_int;
    fn MPI_Allreduce(
        send: *const c_void,
        recv: *mut c_void,
        count: c_int,
        datatype: RawDatatype,
        op: RawOp,
        comm: RawComm,
    ) -> c_int;
    fn MPI_Barrier(comm: RawComm) -> c_int;
}

fn check(code: c_int) -> Result<(), CommError> {
    if code == MPI_SUCCESS {
        Ok(())
    } else {
        Err(CommError::Runtime(code))
    }
}

static INITIALIZED_HERE: AtomicBool = AtomicBool::new(false);

/// Owns the runtime; finalizes it on drop.
pub struct MpiRuntime {
    _private: (),
}

impl MpiRuntime {
    pub fn init() -> Result<MpiRuntime, CommError> {
        let mut flag: c_int = 0;
        unsafe {
            check(MPI_Initialized(&mut flag))?;
            if flag == 0 {
                check(MPI_Init(ptr::null_mut(), ptr::null_mut()))?;
                INITIALIZED_HERE.store(true, Ordering::SeqCst);
            }
        }
        Ok(MpiRuntime { _private: () })
    }

    pub fn world(&self) -> MpiComm {
        MpiComm { raw: ptr::addr_of_mut!(ompi_mpi_comm_world), owned: false }
    }
}

impl Drop for MpiRuntime {
    fn drop(&mut self) {
        if INITIALIZED_HERE.swap(false, Ordering::SeqCst) {
            unsafe {
                MPI_Finalize();
            }
        }
    }
}

pub struct MpiComm {
    raw: RawComm,
    owned: bool,
}

// A communicator handle is used by exactly one thread of one process.
unsafe impl Send for MpiComm {}

impl Drop for MpiComm {
    fn drop(&mut self) {
        if self.owned {
            unsafe {
                MPI_Comm_free(&mut self.raw);
            }
        }
    }
}

fn byte_type() -> RawDatatype {
    ptr::addr_of_mut!(ompi_mpi_byte)
}

fn double_type() -> RawDatatype {
    ptr::addr_of_mut!(ompi_mpi_double)
}

impl MpiComm {
    fn reduce_op(&self, value: f64, op: RawOp, all: bool) -> Result<f64, CommError> {
        let mut out = 0.0f64;
        unsafe {
            let send = &value as *const f64 as *const c_void;
            let recv = &mut out as *mut f64 as *mut c_void;
            if all {
                check(MPI_Allreduce(send, recv, 1, double_type(), op, self.raw))?;
            } else {
                check(MPI_Reduce(send, recv, 1, double_type(), op, 0, self.raw))?;
            }
        }
        Ok(out)
    }
}

impl Communicator for MpiComm {
    fn rank(&self) -> usize {
        let mut r: c_int = 0;
        unsafe { MPI_Comm_rank(self.raw, &mut r) };
        r as usize
    }

    fn size(&self) -> usize {
        let mut s: c_int = 0;
        unsafe { MPI_Comm_size(self.raw, &mut s) };
        s as usize
    }

    fn split(&self, color: usize) -> Result<Box<dyn Communicator>, CommError> {
        let mut out: RawComm = ptr::null_mut();
        let color = c_int::try_from(color).map_err(|_| CommError::Mismatch(format!("color {color} too large")))?;
        unsafe { check(MPI_Comm_split(self.raw, color, self.rank() as c_int, &mut out))? };
        Ok(Box::new(MpiComm { raw: out, owned: true }))
    }

    fn all_to_all_bytes(&self, send: &[u8], recv: &mut [u8]) -> Result<(), CommError> {
        let size = self.size();
        if !send.len().is_multiple_of(size) {
            return Err(CommError::Indivisible { len: send.len(), size });
        }
        if send.len() != recv.len() {
            return Err(CommError::Mismatch(format!(
                "send has {} bytes but receive has {}",
                send.len(),
                recv.len()
            )));
        }
        let block = c_int::try_from(send.len() / size)
            .map_err(|_| CommError::Mismatch("all_to_all block exceeds the runtime's count range".into()))?;
        unsafe {
            check(MPI_Alltoall(
                send.as_ptr() as *const c_void,
                block,
                byte_type(),
                recv.as_mut_ptr() as *mut c_void,
                block,
                byte_type(),
                self.raw,
            ))
        }
    }

    fn reduce_sum(&self, value: f64) -> Result<f64, CommError> {
        self.reduce_op(value, ptr::addr_of_mut!(ompi_mpi_op_sum), false)
    }

    fn all_reduce_sum(&self, value: f64) -> Result<f64, CommError> {
        self.reduce_op(value, ptr::addr_of_mut!(ompi_mpi_op_sum), true)
    }

    fn all_reduce_max(&self, value: f64) -> Result<f64, CommError> {
        self.reduce_op(value, ptr::addr_of_mut!(ompi_mpi_op_max), true)
    }

    fn barrier(&self) -> Result<(), CommError> {
        unsafe { check(MPI_Barrier(self.raw)) }
    }
}
