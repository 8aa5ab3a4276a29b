import { Frame, LinkMeta, Meta } from "./types.js";

export interface Segment {
  name: string;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

interface LinkPose {
  angle: number;
  ox: number;
  oy: number;
}

function rotate(x: number, y: number, angle: number): [number, number] {
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  return [c * x - s * y, s * x + c * y];
}

/** World pose (origin + angle) of every link for one canonical frame. */
export function linkPoses(links: LinkMeta[], frame: Frame): LinkPose[] {
  const poses: LinkPose[] = [];
  for (let k = 0; k < links.length; k++) {
    const link = links[k];
    if (link.parent < 0) {
      poses.push({ angle: frame[2], ox: frame[0], oy: frame[1] });
      continue;
    }
    const parent = poses[link.parent];
    const [ax, ay] = rotate(link.attach[0], link.attach[1], parent.angle);
    poses.push({
      angle: parent.angle + frame[3 + link.joint],
      ox: parent.ox + ax,
      oy: parent.oy + ay,
    });
  }
  return poses;
}

/** Drawable world-space bone segments (link origin to its tip). */
export function skeletonSegments(meta: Meta, frame: Frame): Segment[] {
  const poses = linkPoses(meta.links, frame);
  return meta.links.map((link, k) => {
    const pose = poses[k];
    const [tx, ty] = rotate(link.tip[0], link.tip[1], pose.angle);
    return {
      name: link.name,
      x0: pose.ox,
      y0: pose.oy,
      x1: pose.ox + tx,
      y1: pose.oy + ty,
    };
  });
}

/** World positions of the contact points (feet plates etc.). */
export function contactPoints(meta: Meta, frame: Frame): Array<[number, number]> {
  const poses = linkPoses(meta.links, frame);
  return meta.contact_points.map((cp) => {
    const pose = poses[cp.link];
    const [ox, oy] = rotate(cp.offset[0], cp.offset[1], pose.angle);
    return [pose.ox + ox, pose.oy + oy];
  });
}
