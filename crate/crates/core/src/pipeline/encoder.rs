use crate::autodiff::{Tape, Tensor, Var};
use crate::batching::{eval_chunks, feature_vars};
use crate::bilevel::ENCODER_PREFIX;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{Bound, ParamStore};
use crate::rng::{rng_for, stream};
use crate::searchspace::{instantiate, FusionNetwork, Genotype, SearchSpaceConfig};

/// Rows per chunk when encoding a whole dataset.
const ENCODE_CHUNK: usize = 256;

/// A derived fusion network together with its weights (`enc.` names only).
#[derive(Clone, Debug)]
pub struct Encoder {
    pub network: FusionNetwork,
    pub weights: ParamStore,
}

impl Encoder {
    /// Fresh weights drawn from `seed`.
    pub fn new(genotype: &Genotype, space: &SearchSpaceConfig, seed: u64) -> Result<Self> {
        let mut weights = ParamStore::new();
        let mut rng = rng_for(seed, &[stream::INIT_WEIGHTS]);
        let network = instantiate(genotype, space, &mut weights, ENCODER_PREFIX, &mut rng)?;
        Ok(Encoder { network, weights })
    }

    /// Weights taken from `store`, which must hold every `enc.` parameter
    /// the genotype needs with matching shapes. Other entries are ignored.
    pub fn from_weights(genotype: &Genotype, space: &SearchSpaceConfig, store: &ParamStore) -> Result<Self> {
        let mut encoder = Encoder::new(genotype, space, 0)?;
        encoder.weights.load_from(store)?;
        Ok(encoder)
    }

    pub fn output_dim(&self) -> usize {
        self.network.output_dim()
    }

    pub fn forward<'t>(&self, params: &Bound<'t>, features: &[Vec<Var<'t>>]) -> Result<Var<'t>> {
        self.network.forward(params, features)
    }

    /// Representations `h` of every sample, `n × output_dim`. Chunks run
    /// independently and may be spread over threads.
    pub fn encode(&self, dataset: &Dataset, exec: Exec) -> Result<Tensor> {
        if dataset.is_empty() {
            return Err(Error::Empty("cannot encode an empty dataset".into()));
        }
        dataset.check_layout(self.network.config())?;
        let chunks = eval_chunks(dataset.len(), ENCODE_CHUNK);
        let parts = exec.map(&chunks, |chunk| -> Result<Vec<f64>> {
            let tape = Tape::new();
            let w = self.weights.bind(&tape, false);
            let features = feature_vars(&tape, &dataset.gather(chunk)?);
            Ok(self.forward(&w, &features)?.value().data().to_vec())
        });
        let mut data = Vec::with_capacity(dataset.len() * self.output_dim());
        for p in parts {
            data.extend(p?);
        }
        Tensor::new(vec![dataset.len(), self.output_dim()], data)
    }
}
