import { Frame, SegmentInfo } from "./types.js";

/** Ordered executed segments with a playback cursor over their concatenation.
 *
 * Consecutive segments share their boundary state (the server guarantees a
 * bitwise handoff), so every segment after the first contributes its frames
 * from index 1 to keep the concatenation free of duplicates.
 */
export class SessionTimeline {
  private frames: Frame[] = [];
  readonly segments: Array<SegmentInfo & { start: number; end: number }> = [];
  cursor = 0;

  addSegment(executed: Frame[], info: SegmentInfo): void {
    if (executed.length === 0) {
      return;
    }
    const fresh = this.frames.length === 0 ? executed : executed.slice(1);
    const start = this.frames.length === 0 ? 0 : this.frames.length - 1;
    this.frames.push(...fresh);
    this.segments.push({ ...info, start, end: this.frames.length - 1 });
    this.cursor = start;
  }

  get totalFrames(): number {
    return this.frames.length;
  }

  frameAt(index: number): Frame | null {
    if (index < 0 || index >= this.frames.length) {
      return null;
    }
    return this.frames[index];
  }

  currentFrame(): Frame | null {
    return this.frameAt(this.cursor);
  }

  seek(index: number): void {
    if (this.frames.length === 0) {
      this.cursor = 0;
      return;
    }
    this.cursor = Math.min(Math.max(index, 0), this.frames.length - 1);
  }

  /** Advance the cursor; returns false once the end is reached. */
  advance(steps = 1): boolean {
    if (this.cursor + steps >= this.frames.length) {
      this.cursor = Math.max(this.frames.length - 1, 0);
      return false;
    }
    this.cursor += steps;
    return true;
  }

  segmentAt(index: number): number {
    for (let i = 0; i < this.segments.length; i++) {
      if (index <= this.segments[i].end) {
        return i;
      }
    }
    return this.segments.length - 1;
  }
}
