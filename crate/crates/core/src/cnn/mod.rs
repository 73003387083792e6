//! Single-layer convolutional text classifier.
//!
//! Embedded tokens pass through one bank of width-`k` filters (stride 1,
//! valid padding), a ReLU, max-over-time pooling, inverted dropout and a
//! two-way softmax layer. Backpropagation is written out by hand and checked
//! against central differences in [`gradcheck`].

pub mod embedding;
pub mod gradcheck;
pub mod model;
pub mod train;

pub use embedding::{load_pretrained_embeddings, EmbeddingTable};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{
    embed_document, forward, loss_and_gradients, CnnConfig, CnnGradients, ForwardCache, Matrix,
    TextCnnModel, N_CLASSES, POSITIVE_CLASS,
};
pub use train::{encode_documents, predict, train, Example, TrainHistory};
