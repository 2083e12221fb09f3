//! End-to-end training and evaluation: AdamW, map augmentation, the four
//! training loops, windowed inference, and scoring. Everything downstream of
//! a fixed seed is deterministic — reruns produce byte-identical traces,
//! checkpoints, and reports.

mod augment;
mod eval;
mod optim;
mod predict;
mod train;

pub use augment::{augment_mstmap, flip_roi, flip_time, freq_resample, AugmentFlags, Augmented};
pub use eval::{
    ensemble, evaluate, is_train_sample, read_eval_report, rmse, write_eval_report, EvalReport,
    EvalRow,
};
pub use optim::{adamw_step, AdamWConfig, AdamWState};
pub use predict::{
    predict_hr, read_prediction_summary, write_prediction_summary, write_predictions,
    HrPrediction, PredictConfig, PredictInput, PredictMode, Reduce, HR_CLAMP,
};
pub use train::{
    finetune_stencoder, finetune_stformer, pretrain_contrastive, pretrain_selfsup,
    read_loss_trace, write_loss_trace, TraceRow, TrainConfig,
};
