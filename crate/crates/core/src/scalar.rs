use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the numeric core is generic over: `f32` or `f64`.
///
/// Everything downstream (paths, quadrature, solvers, grids) is written
/// against this trait; concrete aliases for the `f64` instantiation live at
/// the crate root.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Cast a finite `f64` constant into the scalar type.
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in Scalar")
    }

    /// Widen to `f64`, for special functions evaluated in double precision.
    fn widen(self) -> f64 {
        self.to_f64().expect("Scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
