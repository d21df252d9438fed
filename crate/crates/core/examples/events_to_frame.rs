//! Writes a small synthetic event stream in both on-disk formats, reads
//! each back and accumulates it into a frame.

use tde_snn::encoder::{accumulate_events, read_events_bin, read_events_csv, write_events_bin, write_events_csv, write_frame_csv, Event};

fn main() -> tde_snn::Result<()> {
    // a bright edge sweeping right, with a little opposite-polarity noise
    let mut events = Vec::new();
    for t in 0..6u16 {
        for y in 0..4u16 {
            events.push(Event::new(t, y, 1000 * t as u64, 1));
        }
        events.push(Event::new(5 - t, 3, 1000 * t as u64 + 500, -1));
    }
    let (mut csv, mut bin) = (Vec::new(), Vec::new());
    write_events_csv(&events, &mut csv).expect("write to memory");
    write_events_bin(&events, &mut bin).expect("write to memory");
    println!("{} events: {} bytes as csv, {} as binary", events.len(), csv.len(), bin.len());
    assert_eq!(read_events_csv(&csv[..])?, read_events_bin(&bin[..])?);

    for window in [0..6000, 2000..4000] {
        let frame = accumulate_events(&events, 4, 6, window.clone())?;
        println!("window {window:?}:");
        write_frame_csv(&frame, std::io::stdout()).expect("stdout");
    }
    Ok(())
}
