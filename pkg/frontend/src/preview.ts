// Debounced, latest-wins preview requests: at most one in flight; a new
// request during the debounce window replaces the pending one, and a new
// dispatch aborts the in-flight fetch.

import { TransplantRequest } from './types.js';

export type PreviewRunner = (req: TransplantRequest, signal: AbortSignal) => Promise<ArrayBuffer>;

export interface PreviewCallbacks {
    onFrame: (png: ArrayBuffer, req: TransplantRequest) => void;
    onError?: (error: unknown) => void;
    onDispatch?: (req: TransplantRequest) => void;
}

export class PreviewScheduler {
    private timer: ReturnType<typeof setTimeout> | null = null;
    private pending: TransplantRequest | null = null;
    private inflight: AbortController | null = null;
    private generation = 0;

    constructor(
        private run: PreviewRunner,
        private callbacks: PreviewCallbacks,
        public delayMs: number = 150,
    ) {}

    request(req: TransplantRequest): void {
        this.pending = req;
        if (this.timer !== null) clearTimeout(this.timer);
        this.timer = setTimeout(() => this.fire(), this.delayMs);
    }

    /** Skip the debounce (initial render, toggle clicks). */
    requestNow(req: TransplantRequest): void {
        this.pending = req;
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
        this.fire();
    }

    private fire(): void {
        this.timer = null;
        const req = this.pending;
        if (!req) return;
        this.pending = null;
        if (this.inflight) this.inflight.abort();
        const controller = new AbortController();
        this.inflight = controller;
        const generation = ++this.generation;
        this.callbacks.onDispatch?.(req);
        this.run(req, controller.signal).then(
            (png) => {
                if (generation === this.generation) this.callbacks.onFrame(png, req);
            },
            (error) => {
                if (controller.signal.aborted) return; // superseded, not an error
                if (generation === this.generation) this.callbacks.onError?.(error);
            },
        );
    }

    cancel(): void {
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
        this.pending = null;
        if (this.inflight) this.inflight.abort();
    }
}
