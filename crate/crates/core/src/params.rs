//! Parameter containers generic over their leaf type.
//!
//! Every parameter struct is written once as `Struct<T>`: `Struct<Tensor>` owns
//! the values, `Struct<Var>` is the same structure bound onto a tape. Leaves are
//! addressed by dotted names (`forward.w_xi`), which is what the optimizer state
//! and checkpoints key on.

use rand::Rng;

use crate::autodiff::Tensor;

/// Declares a flat parameter struct with `map`, `visit` and `visit_mut`.
macro_rules! param_struct {
    (
        $(#[$meta:meta])*
        pub struct $name:ident {
            $( $(#[$fmeta:meta])* pub $field:ident ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T = $crate::autodiff::Tensor> {
            $( $(#[$fmeta])* pub $field: T, )*
        }

        impl<T> $name<T> {
            pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> $name<U> {
                $name { $( $field: f(&self.$field), )* }
            }

            pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &T)) {
                $( f(format!("{prefix}{}", stringify!($field)), &self.$field); )*
            }

            pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
                $( f(format!("{prefix}{}", stringify!($field)), &mut self.$field); )*
            }
        }
    };
}

pub(crate) use param_struct;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, marked trainable.
pub(crate) fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit)).with_grad(true)
}

pub(crate) fn trainable_zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(shape).with_grad(true)
}

pub(crate) fn trainable_full(shape: &[usize], value: f64) -> Tensor {
    Tensor::full(shape, value).with_grad(true)
}
