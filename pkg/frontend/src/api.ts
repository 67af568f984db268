import { AnnotationRow, ImageRow, TransplantRequest } from './types.js';

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

async function checkOk(resp: Response): Promise<Response> {
    if (!resp.ok) {
        let detail = resp.statusText;
        try {
            const body = await resp.json();
            if (body && typeof body.detail === 'string') detail = body.detail;
        } catch {
            // non-JSON error body, keep the status text
        }
        throw new ApiError(resp.status, detail);
    }
    return resp;
}

export class ApiClient {
    constructor(public baseUrl: string = 'http://127.0.0.1:8731') {
        this.baseUrl = baseUrl.replace(/\/$/, '');
    }

    async ping(): Promise<boolean> {
        try {
            const resp = await fetch(`${this.baseUrl}/images`, { method: 'GET' });
            return resp.ok;
        } catch {
            return false;
        }
    }

    async listImages(): Promise<ImageRow[]> {
        const resp = await checkOk(await fetch(`${this.baseUrl}/images`));
        return resp.json();
    }

    async listAnnotations(category?: string): Promise<AnnotationRow[]> {
        const url = new URL(`${this.baseUrl}/annotations`);
        if (category) url.searchParams.set('category', category);
        const resp = await checkOk(await fetch(url));
        return resp.json();
    }

    imageFileUrl(imageId: number): string {
        return `${this.baseUrl}/images/${imageId}/file`;
    }

    cropUrl(annotationId: number): string {
        return `${this.baseUrl}/annotations/${annotationId}/crop`;
    }

    async fetchImageFile(imageId: number): Promise<ArrayBuffer> {
        const resp = await checkOk(await fetch(this.imageFileUrl(imageId)));
        return resp.arrayBuffer();
    }

    async fetchCrop(annotationId: number): Promise<ArrayBuffer> {
        const resp = await checkOk(await fetch(this.cropUrl(annotationId)));
        return resp.arrayBuffer();
    }

    async preview(req: TransplantRequest, signal?: AbortSignal): Promise<ArrayBuffer> {
        const resp = await checkOk(
            await fetch(`${this.baseUrl}/preview`, {
                method: 'POST',
                headers: { 'Content-Type': 'application/json' },
                body: JSON.stringify(req),
                signal,
            }),
        );
        return resp.arrayBuffer();
    }

    async commit(req: TransplantRequest): Promise<number> {
        const resp = await checkOk(
            await fetch(`${this.baseUrl}/commit`, {
                method: 'POST',
                headers: { 'Content-Type': 'application/json' },
                body: JSON.stringify(req),
            }),
        );
        const body = await resp.json();
        return body.annotation_id as number;
    }

    async exportDataset(): Promise<ArrayBuffer> {
        const resp = await checkOk(await fetch(`${this.baseUrl}/export`));
        return resp.arrayBuffer();
    }
}
