//! The priority ladder on hand-built snapshots, then a replayed trace.
//!
//!     cargo run --example arbitration_ladder [-- trace.jsonl]

use wheelsim::arbitration::{arbitrate, clear_safe_halt, run_loop, ArbitrationState, ControlInputs, Hazards, LoopConfig, MotionDirection, TraceSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut state = ArbitrationState::default();
    let at = |t: u64, s: ControlInputs, state: &mut ArbitrationState| {
        let (mode, cmd, next) = arbitrate(&ControlInputs { timestamp: t, ..s }, *state);
        *state = next;
        println!("t={t:>4} ms  {mode:<8} {:<8} speed {:.2}  latched={}", cmd.direction(), cmd.speed(), next.safe_halt);
    };

    let voice = ControlInputs { voice_ready: true, voice_command: Some(MotionDirection::Forward), ..Default::default() };
    let both = ControlInputs { joy_speed: 1500, joy_direction: Some(MotionDirection::Right), ..voice.clone() };
    at(0, voice.clone(), &mut state);
    // the stick must stay deflected for 250 ms before it outranks voice
    for t in [20, 140, 280] {
        at(t, both.clone(), &mut state);
    }
    at(300, ControlInputs { fall_flag: true, ..both.clone() }, &mut state);
    at(320, both, &mut state);
    state = clear_safe_halt(state, Hazards::default())?;
    at(340, voice, &mut state);

    if let Some(path) = std::env::args().nth(1) {
        let source = TraceSource::from_jsonl(&std::fs::read_to_string(path)?)?;
        for tick in run_loop(source, LoopConfig::default()) {
            println!("{}", tick.to_timeline_json());
        }
    }
    Ok(())
}
