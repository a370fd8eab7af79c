use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the models and metrics are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts into every float scalar")
    }

    fn of_count(count: u64) -> Self {
        Self::from_u64(count).expect("count converts into every float scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float scalar converts into f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
