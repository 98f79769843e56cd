//! Dense kernels every higher layer is built from: matmul, softmax, layer
//! norm, GELU, the MAC counter and the binary16 emulator.

mod half;
mod kernels;
mod matrix;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::half::{f32_to_half_bits, half_bits_to_f32, round_slice_to_half, to_half_round_trip, HALF_MAX};
pub use self::kernels::{gelu, layer_norm, layer_norm_rows, softmax_rows, softmax_rows_inplace};
pub use self::matrix::{matmul, matmul_transposed, Matrix, OpCounter};

use crate::error::Error;

/// Numeric precision of the forward pass.
///
/// `Half` keeps `f32` storage but rounds weights once and every kernel
/// output through binary16.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    Single,
    Half,
}

impl PrecisionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrecisionMode::Single => "single",
            PrecisionMode::Half => "half",
        }
    }

    /// Round a buffer in place when running in half mode.
    #[inline]
    pub fn apply(self, values: &mut [f32]) {
        if self == PrecisionMode::Half {
            round_slice_to_half(values);
        }
    }

    #[inline]
    pub fn apply_matrix(self, m: &mut Matrix) {
        self.apply(m.data_mut());
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "single" => Ok(PrecisionMode::Single),
            "half" => Ok(PrecisionMode::Half),
            other => Err(Error::invalid("precision", format!("`{other}` is not one of single, half"))),
        }
    }
}
