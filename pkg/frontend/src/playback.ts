/**
 * Clip playback behind a small interface so the session logic runs both
 * in the browser (HTMLAudioElement) and in tests (a timed fake).
 */

export interface ClipInfo {
  category: "RBC" | "PBC";
  clip_id: string;
  path: string;
  transcript: string;
}

export interface ClipManifest {
  clips: ClipInfo[];
  prompts?: Record<string, string>;
}

export interface ClipPlayer {
  /** Resolves when playback of the clip has finished. */
  play(path: string): Promise<void>;
}

export function clipById(manifest: ClipManifest, clipId: string): ClipInfo | undefined {
  return manifest.clips.find((c) => c.clip_id === clipId);
}

export class HtmlClipPlayer implements ClipPlayer {
  private readonly baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  play(path: string): Promise<void> {
    return new Promise((resolve, reject) => {
      const audio = new Audio(`${this.baseUrl}/${path}`);
      audio.addEventListener("ended", () => resolve());
      audio.addEventListener("error", () => reject(new Error(`cannot play ${path}`)));
      void audio.play().catch(reject);
    });
  }
}
