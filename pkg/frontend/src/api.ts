/**
 * Typed client for the annotation service HTTP API.
 *
 * Every response is validated with zod before it reaches application
 * code, so schema drift between server and client fails loudly at the
 * boundary instead of deep inside the UI.
 */

import { z } from "zod";

export const MentionSchema = z.object({
  start: z.number().int().nonnegative(),
  end: z.number().int().nonnegative(),
  cui: z.string().nullable(),
  confidence: z.number().min(0).max(1).nullable(),
  meta: z.record(z.string(), z.string()),
});
export type Mention = z.infer<typeof MentionSchema>;

export const ReviewMentionSchema = MentionSchema.extend({
  status: z.enum(["auto_accepted", "needs_input"]),
  untrained: z.boolean(),
});
export type ReviewMention = z.infer<typeof ReviewMentionSchema>;

export const AnnotateResponseSchema = z.object({
  doc_id: z.string(),
  text_hash: z.string(),
  mentions: z.array(MentionSchema),
});
export type AnnotateResponse = z.infer<typeof AnnotateResponseSchema>;

export const NextDocumentSchema = z.object({
  doc_id: z.string(),
  text: z.string(),
  mentions: z.array(ReviewMentionSchema),
});
export type NextDocument = z.infer<typeof NextDocumentSchema>;

export const ProjectSchema = z.object({
  id: z.union([z.number(), z.string()]),
  name: z.string(),
});
export type Project = z.infer<typeof ProjectSchema>;

export const FeedbackRequestSchema = z.object({
  doc_id: z.string(),
  annotator: z.string(),
  start: z.number().int().nonnegative(),
  end: z.number().int().positive(),
  cui: z.string().min(1),
  verdict: z.enum(["correct", "incorrect", "killed"]),
  manually_added: z.boolean().optional(),
  meta: z.record(z.string(), z.string()).optional(),
});
export type FeedbackRequest = z.infer<typeof FeedbackRequestSchema>;

export const FeedbackResponseSchema = z.object({
  recorded: z.boolean(),
  trained: z.boolean(),
  train_count: z.number().int().optional(),
});

export const ExportAnnotationSchema = z.object({
  start: z.number().int().nonnegative(),
  end: z.number().int().nonnegative(),
  cui: z.string().min(1),
  correct: z.boolean(),
  killed: z.boolean(),
  manually_added: z.boolean(),
  annotator: z.string().optional(),
  meta: z.record(z.string(), z.string()),
});

export const ExportSchema = z.object({
  schema_version: z.literal(1),
  projects: z.array(
    z.object({
      id: z.union([z.number(), z.string()]),
      name: z.string(),
      documents: z.array(
        z.object({
          doc_id: z.union([z.number(), z.string()]),
          text: z.string(),
          annotations: z.array(ExportAnnotationSchema),
        }),
      ),
    }),
  ),
});
export type AnnotationExport = z.infer<typeof ExportSchema>;

export const ConceptHitSchema = z.object({ cui: z.string(), name: z.string() });
export type ConceptHit = z.infer<typeof ConceptHitSchema>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface ApiClientOptions {
  baseUrl: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.token) headers["authorization"] = `Bearer ${this.token}`;
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (resp.status === 204) return null;
    const text = await resp.text();
    let payload: unknown = null;
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      throw new ApiError(resp.status, `non-JSON response: ${text.slice(0, 120)}`);
    }
    if (!resp.ok) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : text;
      throw new ApiError(resp.status, detail);
    }
    return payload;
  }

  async annotate(text: string, docId = ""): Promise<AnnotateResponse> {
    const raw = await this.request("POST", "/api/annotate", {
      text,
      doc_id: docId,
    });
    return AnnotateResponseSchema.parse(raw);
  }

  async createProject(
    name: string,
    documents: Array<{ doc_id: string; text: string }>,
    options: { online_learning?: boolean; meta_tasks?: string[] } = {},
  ): Promise<Project> {
    const raw = await this.request("POST", "/api/projects", {
      name,
      documents,
      ...options,
    });
    return ProjectSchema.parse(raw);
  }

  async listProjects(): Promise<Project[]> {
    const raw = await this.request("GET", "/api/projects");
    return z.array(ProjectSchema.loose()).parse(raw);
  }

  /** Null when the annotator has reviewed every document. */
  async nextDocument(
    projectId: number | string,
    annotator: string,
  ): Promise<NextDocument | null> {
    const raw = await this.request(
      "GET",
      `/api/projects/${projectId}/next_document?annotator=${encodeURIComponent(annotator)}`,
    );
    if (raw === null) return null;
    return NextDocumentSchema.parse(raw);
  }

  async submitFeedback(
    projectId: number | string,
    feedback: FeedbackRequest,
  ): Promise<z.infer<typeof FeedbackResponseSchema>> {
    FeedbackRequestSchema.parse(feedback);
    const raw = await this.request(
      "POST",
      `/api/projects/${projectId}/feedback`,
      feedback,
    );
    return FeedbackResponseSchema.parse(raw);
  }

  async exportProject(projectId: number | string): Promise<AnnotationExport> {
    const raw = await this.request("GET", `/api/projects/${projectId}/export`);
    return ExportSchema.parse(raw);
  }

  async searchConcepts(query: string): Promise<ConceptHit[]> {
    const raw = await this.request(
      "GET",
      `/api/concepts?q=${encodeURIComponent(query)}`,
    );
    return z.array(ConceptHitSchema).parse(raw);
  }

  async modelAction(
    action: "snapshot" | "rollback" | "metrics",
  ): Promise<Record<string, unknown>> {
    const raw = await this.request("POST", `/api/models/${action}`);
    return z.record(z.string(), z.unknown()).parse(raw);
  }
}
