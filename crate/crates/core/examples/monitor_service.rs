//! Start the HTTP monitor with a live drive session, push a tachycardia, and
//! walk the alert through acknowledgement over the API.

use std::sync::Arc;
use std::time::Duration;

use wheelsim::calibration::{VitalKind, VitalProfile};
use wheelsim::monitor::http::{serve, AppState, DriveConsole};
use wheelsim::monitor::{MonitorService, ServiceConfig, SystemClock};
use wheelsim::sim::{LiveConfig, LiveSession};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("wheelsim-monitor-{}", std::process::id()));
    let key = [3; 16];
    let service = Arc::new(MonitorService::open(ServiceConfig::new(&dir), key, Box::new(SystemClock))?);
    let session = Arc::new(LiveSession::start(service.clone(), LiveConfig::new(key)));
    let state = AppState { service: service.clone(), console: Some(session.clone() as Arc<dyn DriveConsole>) };

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(serve(listener, state, async {
        let _ = stop_rx.await;
    }));
    println!("serving on {base}");

    let post = |path: &str, body: &str| -> Result<String, Box<dyn std::error::Error>> {
        let mut r = ureq::post(format!("{base}{path}")).content_type("application/json").send(body)?;
        Ok(r.body_mut().read_to_string()?)
    };
    let get = |path: &str| -> Result<String, Box<dyn std::error::Error>> { Ok(ureq::get(format!("{base}{path}")).call()?.body_mut().read_to_string()?) };

    println!("drive: {}", post("/drive", r#"{"modality":"joystick","x":0,"y":1500}"#)?);
    std::thread::sleep(Duration::from_millis(1_200));
    println!("latest: {}", get("/patients/1/latest")?);

    session.set_vital_profile(VitalKind::HeartRate, VitalProfile::Constant(150.0));
    std::thread::sleep(Duration::from_millis(1_500));
    let alerts: serde_json::Value = serde_json::from_str(&get("/alerts?active")?)?;
    println!("active alerts: {alerts}");
    match post("/safehalt/clear", "{}") {
        Ok(body) => println!("clear: {body}"),
        Err(e) => println!("clear refused while the heart rate is high: {e}"),
    }
    if let Some(id) = alerts[0]["id"].as_u64() {
        println!("ack: {}", post(&format!("/alerts/{id}/ack"), "{}")?);
    }

    let _ = stop_tx.send(());
    rt.block_on(server)??;
    std::fs::remove_dir_all(dir)?;
    Ok(())
}
