// Placement geometry. The extent formula mirrors the service's output
// canvas (ceil(scale * (w|cos| + h|sin|)) with a tiny epsilon), so what
// the UI draws is exactly the box the service will fill.

import { Placement } from './types.js';

export interface Extent {
    width: number;
    height: number;
}

export function transformedExtent(objWidth: number, objHeight: number, scale: number, rotationDeg: number): Extent {
    const theta = (rotationDeg * Math.PI) / 180;
    const c = Math.abs(Math.cos(theta));
    const s = Math.abs(Math.sin(theta));
    return {
        width: Math.max(1, Math.ceil(scale * (objWidth * c + objHeight * s) - 1e-9)),
        height: Math.max(1, Math.ceil(scale * (objWidth * s + objHeight * c) - 1e-9)),
    };
}

export function placedBox(p: Placement, objWidth: number, objHeight: number) {
    const ext = transformedExtent(objWidth, objHeight, p.scale, p.rotation);
    return { x: p.x, y: p.y, width: ext.width, height: ext.height };
}

/** False once the whole transformed box has left the target image. */
export function intersectsTarget(
    p: Placement,
    objWidth: number,
    objHeight: number,
    targetWidth: number,
    targetHeight: number,
): boolean {
    const box = placedBox(p, objWidth, objHeight);
    return box.x < targetWidth && box.y < targetHeight && box.x + box.width > 0 && box.y + box.height > 0;
}

export function isValidPlacement(p: Placement): boolean {
    if (!(p.scale > 0)) return false;
    if (p.soft && !(p.radius > 0)) return false;
    return Number.isFinite(p.x) && Number.isFinite(p.y) && Number.isFinite(p.rotation);
}

export type Handle = 'move' | 'scale' | 'rotate';

const HANDLE_SIZE = 12;

/** Hit-test the drag surfaces: corner square scales, stalk dot rotates, body moves. */
export function hitTest(
    px: number,
    py: number,
    p: Placement,
    objWidth: number,
    objHeight: number,
): Handle | null {
    const box = placedBox(p, objWidth, objHeight);
    const h = HANDLE_SIZE;
    const scaleHandle =
        Math.abs(px - (box.x + box.width)) <= h && Math.abs(py - (box.y + box.height)) <= h;
    if (scaleHandle) return 'scale';
    const stalkX = box.x + box.width / 2;
    const stalkY = box.y - 18;
    if (Math.hypot(px - stalkX, py - stalkY) <= h) return 'rotate';
    if (px >= box.x && px <= box.x + box.width && py >= box.y && py <= box.y + box.height) {
        return 'move';
    }
    return null;
}
