/**
 * Clip playback behind a small interface so the session logic runs both
 * in the browser (HTMLAudioElement) and in tests (a timed fake).
 */
export function clipById(manifest, clipId) {
    return manifest.clips.find((c) => c.clip_id === clipId);
}
export class HtmlClipPlayer {
    constructor(baseUrl) {
        this.baseUrl = baseUrl.replace(/\/$/, "");
    }
    play(path) {
        return new Promise((resolve, reject) => {
            const audio = new Audio(`${this.baseUrl}/${path}`);
            audio.addEventListener("ended", () => resolve());
            audio.addEventListener("error", () => reject(new Error(`cannot play ${path}`)));
            void audio.play().catch(reject);
        });
    }
}
