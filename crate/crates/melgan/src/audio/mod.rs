//! WAV I/O and the mel-spectrogram frontend.

pub mod mel;
pub mod stft;
pub mod wav;

pub use mel::{
    mel_band_centers, mel_filterbank, mel_from_audio_tensor, mel_spectrogram, MelConfig,
    MelSpectrogram, MEL_HOP,
};
pub use stft::{hann_window, reflect_pad_signal, stft_magnitude};
pub use wav::{read_wav, write_wav, AudioClip};
