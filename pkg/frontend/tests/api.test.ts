import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, getPending, postAdvance, postLabels } from "../src/api.js";

function jsonResponse(status: number, body: unknown) {
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: "",
    json: async () => body,
  } as Response;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("api client", () => {
  it("passes pagination through the query string", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, { total: 0, offset: 3, items: [] }));
    vi.stubGlobal("fetch", fetchMock);
    await getPending(3, 7);
    expect(fetchMock).toHaveBeenCalledWith("api/pending?offset=3&limit=7", undefined);
  });

  it("posts labels as a json array", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse(200, { accepted: 1, remaining: 0, state: "ready_to_advance" }),
    );
    vi.stubGlobal("fetch", fetchMock);
    await postLabels([{ query_id: "2-0", label: "malicious", attack_class: "sqli" }]);
    const [path, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(path).toBe("api/labels");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual([
      { query_id: "2-0", label: "malicious", attack_class: "sqli" },
    ]);
  });

  it("advances with a POST and no body", async () => {
    const fetchMock = vi.fn(async () => jsonResponse(200, { report: {}, session: {} }));
    vi.stubGlobal("fetch", fetchMock);
    await postAdvance();
    const [, init] = fetchMock.mock.calls[0] as unknown as [string, RequestInit];
    expect(init.method).toBe("POST");
  });

  it("surfaces the server message verbatim", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        jsonResponse(409, { error: "cannot advance while labels are missing" }),
      ),
    );
    const err = (await postAdvance().catch((e) => e)) as ApiError;
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.message).toBe("cannot advance while labels are missing");
    expect(err.connectionLost).toBe(false);
  });

  it("flags a network failure as a lost connection", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () => {
        throw new TypeError("fetch failed");
      }),
    );
    const err = (await postAdvance().catch((e) => e)) as ApiError;
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(0);
    expect(err.connectionLost).toBe(true);
  });
});
