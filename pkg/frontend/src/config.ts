/** Console configuration: a single JSON file (API base URL + token).
 * A `?token=` query parameter overrides the file so one build serves
 * several roles in demos.
 */

import type { ConsoleConfig } from "./types.js";

export async function loadConfig(
  fetchFn: (url: string) => Promise<Response> = fetch,
): Promise<ConsoleConfig> {
  let config: ConsoleConfig = { apiBase: "", token: "" };
  try {
    const response = await fetchFn("./config.json");
    if (response.ok) {
      const body = (await response.json()) as Partial<ConsoleConfig>;
      config = {
        apiBase: body.apiBase ?? "",
        token: body.token ?? "",
      };
    }
  } catch {
    // no config file: same-origin API, token from the URL
  }
  if (typeof location !== "undefined") {
    const params = new URLSearchParams(location.search);
    const token = params.get("token");
    if (token) config.token = token;
    if (!config.apiBase) config.apiBase = location.origin;
  }
  return config;
}
