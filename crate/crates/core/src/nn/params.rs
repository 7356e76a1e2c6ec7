//! Flat parameter storage with named, shaped views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    FanIn(usize),
    Zeros,
    Ones,
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A contiguous range of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.len]
    }

    pub fn of_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    pub len: usize,
}

impl Layout {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
        let len = shape.iter().product();
        let slot = Slot { offset: self.len, len };
        self.specs.push(ParamSpec { name: name.into(), shape: shape.to_vec(), offset: self.len, init });
        self.len += len;
        slot
    }

    /// Seeded initialization, tensor by tensor in declaration order.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.len];
        for s in &self.specs {
            let dst = &mut p[s.offset..s.offset + s.len()];
            match s.init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                    dst.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
                }
                Init::Zeros => {}
                Init::Ones => dst.iter_mut().for_each(|x| *x = 1.0),
                Init::Normal(sd) => {
                    let n = Normal::new(0.0, sd).expect("valid sd");
                    dst.iter_mut().for_each(|x| *x = n.sample(&mut rng));
                }
            }
        }
        p
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Name of the tensor containing flat index `i`.
    pub fn name_of(&self, i: usize) -> &str {
        let k = self.specs.partition_point(|s| s.offset <= i) - 1;
        &self.specs[k].name
    }
}
