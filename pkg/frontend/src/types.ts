export interface LinkMeta {
  name: string;
  parent: number; // parent link index, -1 for the root link
  joint: number; // joint-angle index into the state's q block, -1 for the root
  attach: [number, number]; // attachment point in the parent frame
  tip: [number, number]; // distal endpoint in the link's own frame
}

export interface ContactMeta {
  link: number;
  offset: [number, number];
}

export interface Meta {
  J: number;
  D: number;
  L: number;
  fps: number;
  arena_half: number;
  links: LinkMeta[];
  contact_points: ContactMeta[];
  sampler: string;
  instructions: string[];
}

export type Frame = number[]; // canonical flat state, length D

export interface SegmentResponse {
  plan: Frame[];
  executed: Frame[];
  actions: number[][];
  success: boolean | null;
  distance: number | null;
  completed: boolean;
}

export interface SegmentInfo {
  instruction: string;
  waypoint: [number, number] | null;
  success: boolean | null;
  distance: number | null;
}
