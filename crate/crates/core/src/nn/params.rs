use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "fairshift-params";
pub const PARAMS_VERSION: u32 = 1;

/// MLP weights and biases as one flat vector.
///
/// Layer-major order: for each layer its `in × out` weight matrix in
/// row-major order, followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    shapes: Vec<(usize, usize)>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    format: String,
    version: u32,
    shapes: Vec<(usize, usize)>,
    values: Vec<f64>,
}

pub fn param_count(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|&(i, o)| i * o + o).sum()
}

fn check_shapes(shapes: &[(usize, usize)]) -> Result<()> {
    if shapes.is_empty() {
        return Err(Error::Shape("an MLP needs at least one layer".into()));
    }
    if let Some(&(i, o)) = shapes.iter().find(|&&(i, o)| i == 0 || o == 0) {
        return Err(Error::Shape(format!("zero-sized layer ({i}, {o})")));
    }
    for w in shapes.windows(2) {
        if w[0].1 != w[1].0 {
            return Err(Error::Shape(format!(
                "layer output {} does not feed next input {}",
                w[0].1, w[1].0
            )));
        }
    }
    if shapes.last().map(|s| s.1) != Some(2) {
        return Err(Error::Shape("final layer must have 2 outputs".into()));
    }
    Ok(())
}

/// Shapes of an MLP with the given input width, hidden widths and 2 outputs.
pub fn mlp_shapes(input: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(2);
    dims.windows(2).map(|w| (w[0], w[1])).collect()
}

impl ParamSet {
    pub fn new(shapes: Vec<(usize, usize)>, values: Vec<f64>) -> Result<Self> {
        check_shapes(&shapes)?;
        if values.len() != param_count(&shapes) {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                param_count(&shapes)
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite parameter at index {i}")));
        }
        Ok(ParamSet { shapes, values })
    }

    pub fn zeros(shapes: Vec<(usize, usize)>) -> Result<Self> {
        let n = param_count(&shapes);
        Self::new(shapes, vec![0.0; n])
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.shapes[0].0
    }

    /// Returns a copy with new values in the same layout.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.shapes.clone(), values)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.shapes.iter().scan(0usize, |off, &(i, o)| {
            let start = *off;
            *off += i * o + o;
            Some((start, i, o))
        })
    }

    /// (weights `in × out`, biases `out`) of every layer.
    pub fn layers(&self) -> Vec<(ArrayView2<'_, f64>, ArrayView1<'_, f64>)> {
        self.offsets()
            .map(|(start, i, o)| {
                let w = ArrayView2::from_shape((i, o), &self.values[start..start + i * o])
                    .expect("layer shape");
                let b = ArrayView1::from(&self.values[start + i * o..start + i * o + o]);
                (w, b)
            })
            .collect()
    }

    /// Owned per-layer matrices, biases as `1 × out` rows.
    pub fn layer_matrices(&self) -> Vec<(Array2<f64>, Array2<f64>)> {
        self.layers()
            .into_iter()
            .map(|(w, b)| (w.to_owned(), b.to_owned().insert_axis(ndarray::Axis(0))))
            .collect()
    }

    /// Indices of all bias entries.
    pub fn bias_indices(&self) -> Vec<usize> {
        self.offsets()
            .flat_map(|(start, i, o)| (start + i * o)..(start + i * o + o))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ParamFile {
            format: PARAMS_FORMAT.into(),
            version: PARAMS_VERSION,
            shapes: self.shapes.clone(),
            values: self.values.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamFile = serde_json::from_str(text)?;
        if file.format != PARAMS_FORMAT || file.version != PARAMS_VERSION {
            return Err(Error::Config(format!(
                "unsupported parameter file {} v{}",
                file.format, file.version
            )));
        }
        Self::new(file.shapes, file.values)
    }
}

/// Glorot-uniform weights and zero biases.
pub fn init_mlp(shapes: &[(usize, usize)], seed: u64) -> Result<ParamSet> {
    check_shapes(shapes)?;
    let mut rng = crate::seed::rng_for(seed, 0x494E_4954);
    let mut values = Vec::with_capacity(param_count(shapes));
    for &(i, o) in shapes {
        let limit = (6.0 / (i + o) as f64).sqrt();
        values.extend((0..i * o).map(|_| rng.random_range(-limit..limit)));
        values.extend(std::iter::repeat_n(0.0, o));
    }
    ParamSet::new(shapes.to_vec(), values)
}
