import { ApiClient, ApiError } from "./api.js";
import { ArenaView } from "./arena.js";
import { SessionTimeline } from "./timeline.js";
import { Meta } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

class App {
  private readonly api = new ApiClient();
  private meta!: Meta;
  private sessionId!: string;
  private arena!: ArenaView;
  private readonly timeline = new SessionTimeline();
  private waypoint: [number, number] | null = null;
  private playing = false;
  private inFlight = false;
  private lastTick = 0;
  private playhead = 0;

  private readonly canvas = el<HTMLCanvasElement>("arena");
  private readonly banner = el<HTMLDivElement>("banner");
  private readonly form = el<HTMLFormElement>("controls");
  private readonly instructionBox = el<HTMLInputElement>("instruction");
  private readonly submitBtn = el<HTMLButtonElement>("submit");
  private readonly clearBtn = el<HTMLButtonElement>("clear-waypoint");
  private readonly playBtn = el<HTMLButtonElement>("play");
  private readonly scrubber = el<HTMLInputElement>("scrubber");
  private readonly frameLabel = el<HTMLSpanElement>("frame-label");
  private readonly segmentList = el<HTMLUListElement>("segments");

  async connect(): Promise<void> {
    try {
      this.meta = await this.api.meta();
      this.sessionId = await this.api.createSession();
    } catch (err) {
      this.showBanner(err, () => this.connect());
      return;
    }
    this.hideBanner();
    this.arena = new ArenaView(this.canvas, this.meta);
    const list = el<HTMLDataListElement>("suggestions");
    list.innerHTML = "";
    for (const text of this.meta.instructions) {
      const option = document.createElement("option");
      option.value = text;
      list.appendChild(option);
    }
    this.bind();
    this.render();
    requestAnimationFrame((t) => this.tick(t));
  }

  private bind(): void {
    this.canvas.addEventListener("click", (ev) => {
      if (this.inFlight) {
        return;
      }
      const rect = this.canvas.getBoundingClientRect();
      const sx = ((ev.clientX - rect.left) / rect.width) * this.canvas.width;
      const sy = ((ev.clientY - rect.top) / rect.height) * this.canvas.height;
      const [wx] = this.arena.transform().toWorld(sx, sy);
      this.waypoint = [this.arena.clampToArena(wx), 0];
      this.render();
    });
    this.clearBtn.addEventListener("click", () => {
      this.waypoint = null;
      this.render();
    });
    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });
    this.playBtn.addEventListener("click", () => {
      this.playing = !this.playing;
      this.playBtn.textContent = this.playing ? "pause" : "play";
    });
    this.scrubber.addEventListener("input", () => {
      this.playing = false;
      this.playBtn.textContent = "play";
      this.timeline.seek(Number(this.scrubber.value));
      this.render();
    });
  }

  private async submit(): Promise<void> {
    const instruction = this.instructionBox.value.trim();
    if (!instruction || this.inFlight) {
      return; // empty instructions are rejected client-side
    }
    this.setBusy(true);
    try {
      const res = await this.api.runSegment(this.sessionId, instruction, this.waypoint);
      this.timeline.addSegment(res.executed, {
        instruction,
        waypoint: this.waypoint,
        success: res.success,
        distance: res.distance,
      });
      this.playhead = this.timeline.cursor;
      this.refreshSegments();
      this.playing = true;
      this.playBtn.textContent = "pause";
    } catch (err) {
      this.showBanner(err, null);
    } finally {
      this.setBusy(false);
      this.render();
    }
  }

  private setBusy(busy: boolean): void {
    this.inFlight = busy;
    this.submitBtn.disabled = busy;
    this.instructionBox.disabled = busy;
    this.submitBtn.textContent = busy ? "running…" : "go";
  }

  private refreshSegments(): void {
    this.segmentList.innerHTML = "";
    for (const seg of this.timeline.segments) {
      const item = document.createElement("li");
      let badge = "";
      if (seg.success !== null) {
        const dist = seg.distance === null ? "" : ` (${seg.distance.toFixed(2)} m)`;
        badge = seg.success ? ` — reached${dist}` : ` — missed${dist}`;
      }
      const target = seg.waypoint ? ` @ (${seg.waypoint[0].toFixed(1)}, ${seg.waypoint[1].toFixed(1)})` : "";
      item.textContent = `${seg.instruction}${target}${badge}`;
      item.className = seg.success === null ? "" : seg.success ? "ok" : "fail";
      this.segmentList.appendChild(item);
    }
    this.scrubber.max = String(Math.max(this.timeline.totalFrames - 1, 0));
  }

  private tick(t: number): void {
    if (this.playing && this.timeline.totalFrames > 0) {
      if (this.lastTick === 0) {
        this.lastTick = t;
      }
      this.playhead += ((t - this.lastTick) / 1000) * this.meta.fps;
      const target = Math.floor(this.playhead);
      if (target !== this.timeline.cursor) {
        this.timeline.seek(target);
        if (this.timeline.cursor >= this.timeline.totalFrames - 1) {
          this.playing = false;
          this.playBtn.textContent = "play";
        }
        this.render();
      }
    } else {
      this.playhead = this.timeline.cursor;
    }
    this.lastTick = t;
    requestAnimationFrame((next) => this.tick(next));
  }

  private render(): void {
    if (!this.arena) {
      return;
    }
    this.arena.draw(this.timeline.currentFrame(), this.waypoint);
    this.scrubber.value = String(this.timeline.cursor);
    this.frameLabel.textContent = `${this.timeline.cursor + 1} / ${Math.max(this.timeline.totalFrames, 1)}`;
  }

  private showBanner(err: unknown, retry: (() => void) | null): void {
    const message = err instanceof ApiError ? `${err.status || "network"}: ${err.message}` : String(err);
    this.banner.textContent = message;
    this.banner.classList.remove("hidden");
    if (retry) {
      const button = document.createElement("button");
      button.textContent = "retry";
      button.addEventListener("click", retry);
      this.banner.appendChild(button);
    }
  }

  private hideBanner(): void {
    this.banner.classList.add("hidden");
    this.banner.textContent = "";
  }
}

window.addEventListener("DOMContentLoaded", () => {
  void new App().connect();
});
