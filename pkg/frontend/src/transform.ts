/** Invertible world <-> screen mapping; rendering is resolution-independent
 * because every drawn coordinate flows through this transform. */
export class ViewTransform {
  readonly scale: number;
  readonly cx: number;
  readonly cy: number;

  constructor(
    readonly width: number,
    readonly height: number,
    worldHalfWidth: number,
    worldBottom = -0.3,
    worldTop = 2.1,
  ) {
    const sx = width / (2 * worldHalfWidth);
    const sy = height / (worldTop - worldBottom);
    this.scale = Math.min(sx, sy);
    this.cx = width / 2;
    // ground (y = 0) sits worldBottom below the window's lower world edge
    this.cy = height + worldBottom * this.scale;
  }

  toScreen(wx: number, wy: number): [number, number] {
    return [this.cx + wx * this.scale, this.cy - wy * this.scale];
  }

  toWorld(sx: number, sy: number): [number, number] {
    return [(sx - this.cx) / this.scale, (this.cy - sy) / this.scale];
  }
}
