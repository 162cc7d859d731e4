//! Orchestration behind the command-line tool: configuration, datasets,
//! training and the individual commands.

mod cli;
mod commands;
mod config;
mod dataset;
mod gradcheck;
mod train;

pub use cli::{parse_args, run, Invocation, COMMANDS, USAGE};
pub use commands::{
    cmd_encode, cmd_eval, cmd_gradcheck, cmd_infer, cmd_nds, cmd_synth, cmd_train_toy, load_detector, predict_frame,
    Log, GRADCHECK_INSTANCES, GRADCHECK_PER_INSTANCE, GRADCHECK_TOLERANCE,
};
pub use config::RunConfig;
pub use dataset::{
    frame_id, list_ids, load_frames, network_input, read_dataset, read_labels_file, scene_seed, synth_frames,
    write_dataset, Frame, Split,
};
pub use gradcheck::{run_gradcheck, GradcheckReport, OpResult, REL_FLOOR, STEP};
pub use train::{eval_frames, format_curve, mean_loss, prepare, train_toy, StepRecord, TrainResult, TOY_EVAL_IOU};
