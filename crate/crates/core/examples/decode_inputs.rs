//! Each modality's decoder: joystick ADC, voice vocabulary, glove tilt, and a
//! synthetic EOG gaze followed by a double blink.

use wheelsim::decoders::{decode_gesture, decode_joystick, gesture_tilt, parse_voice, EogChannel, EogConfig, EogDecoder, EogSample, EogTrace, JoystickRaw};
use wheelsim::arbitration::MotionDirection;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (x, y) in [(2048, 3800), (400, 2100), (2060, 2040)] {
        println!("joystick ({x}, {y}) -> {:?}", decode_joystick(JoystickRaw::new(x, y, false)?));
    }
    for text in ["forward", "  Stop ", "go faster"] {
        println!("voice {text:?} -> {:?}", parse_voice(text));
    }
    for deg in [10.0, 25.0] {
        println!("glove {deg}° right -> {:?}", decode_gesture(&gesture_tilt(MotionDirection::Right, deg, 0)));
    }

    let cfg = EogConfig::default();
    let mut decoder = EogDecoder::new(cfg);
    let mut trace = EogTrace::default();
    for t in (0..=6_000).step_by(10) {
        // 15° gaze right for 4.5 s, then two blinks on the vertical channel
        let h = if t < 4_500 { 15.0 * cfg.mv_per_degree } else { 0.0 };
        let v = if (5_000..5_150).contains(&t) || (5_400..5_550).contains(&t) { 0.5 } else { 0.0 };
        trace.push(EogSample { t, potential: h, channel: EogChannel::Horizontal });
        trace.push(EogSample { t, potential: v, channel: EogChannel::Vertical });
        if let Ok(u) = decoder.update(&trace, t) {
            if let Some(cmd) = u.emitted {
                println!("eog t={t} ms emitted {cmd} (angle {:.1}°)", u.eog_angle);
            }
        }
    }
    Ok(())
}
