// Session state machine. The one hard rule: the placement sent to
// /commit is exactly the placement of the last dispatched preview, so
// what the user saw is what lands in the dataset.

import { ApiClient } from './api.js';
import { intersectsTarget, isValidPlacement } from './placement.js';
import { AnnotationRow, DEFAULT_PLACEMENT, ImageRow, Placement, TransplantRequest } from './types.js';

export interface SessionState {
    annotation: AnnotationRow | null;
    target: ImageRow | null;
    placement: Placement;
    committedCount: number;
}

export class SessionController {
    state: SessionState = {
        annotation: null,
        target: null,
        placement: { ...DEFAULT_PLACEMENT },
        committedCount: 0,
    };
    lastPreviewed: { request: TransplantRequest; placement: Placement } | null = null;

    constructor(private api: ApiClient) {}

    selectAnnotation(row: AnnotationRow): void {
        this.state.annotation = row;
        this.lastPreviewed = null;
    }

    selectTarget(row: ImageRow): void {
        this.state.target = row;
        // drop the object near the top-left third of the new target
        this.state.placement = {
            ...this.state.placement,
            x: Math.round(row.width / 4),
            y: Math.round(row.height / 4),
        };
        this.lastPreviewed = null;
    }

    updatePlacement(patch: Partial<Placement>): Placement {
        this.state.placement = { ...this.state.placement, ...patch };
        return this.state.placement;
    }

    objectSize(): { width: number; height: number } | null {
        const ann = this.state.annotation;
        if (!ann) return null;
        return { width: ann.bbox[2], height: ann.bbox[3] };
    }

    selectionComplete(): boolean {
        return this.state.annotation !== null && this.state.target !== null;
    }

    /** Commit is allowed only for a previewed, valid, on-canvas placement. */
    canCommit(): boolean {
        if (!this.selectionComplete() || this.lastPreviewed === null) return false;
        const obj = this.objectSize()!;
        const target = this.state.target!;
        const placement = this.lastPreviewed.placement;
        return (
            isValidPlacement(placement) &&
            intersectsTarget(placement, obj.width, obj.height, target.width, target.height)
        );
    }

    buildRequest(): TransplantRequest {
        if (!this.selectionComplete()) throw new Error('select an object and a target first');
        return {
            annotation_id: this.state.annotation!.id,
            target_image_id: this.state.target!.id,
            placement: { ...this.state.placement },
        };
    }

    /** Record what was sent to /preview; commit reuses it verbatim. */
    notePreviewDispatched(request: TransplantRequest): void {
        this.lastPreviewed = { request, placement: { ...request.placement } };
    }

    async commit(): Promise<number> {
        if (!this.canCommit()) throw new Error('nothing previewable to commit');
        const request = this.lastPreviewed!.request;
        const newId = await this.api.commit(request);
        this.state.committedCount += 1;
        return newId;
    }

    async exportDataset(): Promise<ArrayBuffer> {
        return this.api.exportDataset();
    }
}
