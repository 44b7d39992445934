// Periodic refresh stub; the page is rendered server-side.
